/** Thin wrapper over the RDKit WASM build: sanitization verdicts and
 * fingerprints, with a clear error when the toolkit cannot load. */

import { createRequire } from "node:module";

// The WASM bundle's entry point IS the loader function; the shipped
// typings declare the types but no default export, so load via require.
const requireCjs = createRequire(__filename);

export interface MolStructure {
  atomCount: number;
  /** [begin, end, order] per bond; order defaults to 1 in the toolkit's
   * JSON when unannotated. */
  bonds: Array<[number, number, number]>;
}

export interface Toolkit {
  name: string;
  version: string;
  /** null when RDKit fails to parse/sanitize the SMILES. */
  morganFp(smiles: string, radius: number, nBits: number): string | null;
  maccsFp(smiles: string): string | null;
  isValid(smiles: string): boolean;
  /** Heavy-atom graph as the toolkit parsed it; null on parse failure. */
  structure(smiles: string): MolStructure | null;
  maccsAvailable: boolean;
  fraggleAvailable: boolean;
}

/** The generator's kekulized subset writes every element bare, but
 * standard SMILES keeps only B/C/N/O/P/S/F/Cl/Br/I outside brackets;
 * silicon must read [Si]. Translate before handing anything to the
 * toolkit (the subset never emits brackets itself). */
export function toToolkitDialect(smiles: string): string {
  return smiles.replace(/Si/g, "[Si]");
}

let cached: Toolkit | null = null;

export async function loadToolkit(): Promise<Toolkit> {
  if (cached) return cached;
  let rdkit: any;
  try {
    const initRDKitModule = requireCjs("@rdkit/rdkit") as () => Promise<any>;
    rdkit = await initRDKitModule();
  } catch (err) {
    throw new Error(
      `reference toolkit missing: RDKit WASM failed to initialize (${err}). ` +
        "Run `npm install` inside oracle/ first.",
    );
  }

  const withMol = <T>(smiles: string, fn: (mol: any) => T): T | null => {
    let mol: any = null;
    try {
      mol = rdkit.get_mol(toToolkitDialect(smiles));
      if (mol === null) return null;
      return fn(mol);
    } catch {
      return null;
    } finally {
      if (mol !== null) mol.delete();
    }
  };

  const probe = rdkit.get_mol("C");
  const maccsAvailable = typeof probe.get_maccs_fp === "function";
  // Fraggle lives in RDKit's Python contrib layer only; the MinimalLib
  // JS API does not expose it.
  const fraggleAvailable = typeof probe.get_fraggle_similarity === "function";
  probe.delete();

  cached = {
    name: "RDKit (MinimalLib WASM)",
    version: rdkit.version(),
    maccsAvailable,
    fraggleAvailable,
    isValid(smiles: string): boolean {
      return withMol(smiles, () => true) === true;
    },
    morganFp(smiles: string, radius: number, nBits: number): string | null {
      return withMol(smiles, (mol) =>
        mol.get_morgan_fp(JSON.stringify({ radius, nBits })),
      );
    },
    maccsFp(smiles: string): string | null {
      if (!maccsAvailable) return null;
      return withMol(smiles, (mol) => mol.get_maccs_fp());
    },
    structure(smiles: string): MolStructure | null {
      return withMol(smiles, (mol) => {
        const parsed = JSON.parse(mol.get_json()).molecules[0];
        return {
          atomCount: (parsed.atoms ?? []).length,
          bonds: (parsed.bonds ?? []).map(
            (b: any): [number, number, number] =>
              [b.atoms[0], b.atoms[1], b.bo ?? 1],
          ),
        };
      });
    },
  };
  return cached;
}
