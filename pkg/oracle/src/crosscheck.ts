/** Cross-validate the generator's chemistry against the reference
 * toolkit.
 *
 * Inputs are files the generator wrote: a SMILES-per-line corpus, the
 * index-paired reference list, and the `pairwise.csv` its eval command
 * emits (primary validity verdicts plus primary Tanimoto per index).
 * This module never links against the generator package.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { loadToolkit, Toolkit } from "./rdkit";
import { pearson, tanimotoBitStrings } from "./similarity";
import { AgreementReport, AgreementRow, AgreementSummary } from "./types";

export const MORGAN_RADIUS = 2;
export const MORGAN_BITS = 2048;

export function readSmilesLines(file: string): string[] {
  const text = fs.readFileSync(file, "utf-8");
  return text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0 && !l.startsWith("#"))
    .map((l) => (l.includes("\t") ? l.split("\t")[2] ?? l : l));
}

export interface PrimaryRow {
  smiles: string;
  referenceSmiles: string;
  valid: boolean;
  tanimoto: number;
}

/** pairwise.csv from the generator's eval --pairwise run. */
export function readPrimaryCsv(file: string): PrimaryRow[] {
  const lines = fs.readFileSync(file, "utf-8").trim().split(/\r?\n/);
  const header = lines[0].split(",");
  const col = (name: string) => {
    const i = header.indexOf(name);
    if (i < 0) throw new Error(`pairwise csv missing column ${name}`);
    return i;
  };
  const iSmiles = col("smiles");
  const iRef = col("reference_smiles");
  const iValid = col("primary_valid");
  const iTan = col("primary_tanimoto");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    return {
      smiles: cells[iSmiles],
      referenceSmiles: cells[iRef],
      valid: cells[iValid] === "1",
      tanimoto: parseFloat(cells[iTan]),
    };
  });
}

function toolkitTanimoto(
  toolkit: Toolkit,
  a: string,
  b: string,
): number {
  const fa = toolkit.morganFp(a, MORGAN_RADIUS, MORGAN_BITS);
  const fb = toolkit.morganFp(b, MORGAN_RADIUS, MORGAN_BITS);
  if (fa === null || fb === null) return NaN;
  return tanimotoBitStrings(fa, fb);
}

function toolkitMaccs(toolkit: Toolkit, a: string, b: string): number {
  const fa = toolkit.maccsFp(a);
  const fb = toolkit.maccsFp(b);
  if (fa === null || fb === null) return NaN;
  return tanimotoBitStrings(fa, fb);
}

export async function crosscheck(
  corpusFile: string,
  referenceFile: string,
  primaryCsvFile: string,
): Promise<AgreementReport> {
  const toolkit = await loadToolkit();
  const corpus = readSmilesLines(corpusFile);
  const reference = readSmilesLines(referenceFile);
  const primary = readPrimaryCsv(primaryCsvFile);
  if (primary.length < corpus.length) {
    throw new Error(
      `primary csv has ${primary.length} rows for ${corpus.length} molecules`,
    );
  }

  const rows: AgreementRow[] = corpus.map((smiles, index) => {
    const ref = reference[index] ?? reference[reference.length - 1];
    const p = primary[index];
    const toolkitValid = toolkit.isValid(smiles);
    const parseFailed = !toolkitValid;
    return {
      index,
      smiles,
      referenceSmiles: ref,
      toolkitParseFailed: parseFailed,
      primaryValid: p.valid,
      toolkitValid,
      agree: p.valid === toolkitValid,
      primaryTanimoto: p.tanimoto,
      toolkitTanimoto: toolkitTanimoto(toolkit, smiles, ref),
      toolkitMaccs: toolkit.maccsAvailable
        ? toolkitMaccs(toolkit, smiles, ref)
        : NaN,
      toolkitFraggle: toolkit.fraggleAvailable ? NaN : null,
    };
  });

  const summary: AgreementSummary = {
    nMolecules: rows.length,
    validityAgreementRate:
      rows.reduce((s, r) => s + (r.agree ? 1 : 0), 0) / rows.length,
    pearsonTanimoto: pearson(
      rows.map((r) => r.primaryTanimoto),
      rows.map((r) => r.toolkitTanimoto),
    ),
    toolkitName: toolkit.name,
    toolkitVersion: toolkit.version,
    morganRadius: MORGAN_RADIUS,
    morganBits: MORGAN_BITS,
    maccsAvailable: toolkit.maccsAvailable,
    fraggleAvailable: toolkit.fraggleAvailable,
    notes: [
      "validity verdict = toolkit sanitization success",
      `morgan fingerprints: radius ${MORGAN_RADIUS}, ${MORGAN_BITS} bits`,
      toolkit.fraggleAvailable
        ? "fraggle: toolkit defaults"
        : "fraggle: not exposed by this toolkit build; column is null",
    ],
  };
  return { summary, rows };
}

const fmt = (x: number | null): string =>
  x === null ? "" : Number.isNaN(x) ? "nan" : x.toPrecision(17);

export function writeReport(report: AgreementReport, outDir: string): void {
  fs.mkdirSync(outDir, { recursive: true });
  const header = [
    `# toolkit: ${report.summary.toolkitName} ${report.summary.toolkitVersion}`,
    ...report.summary.notes.map((n) => `# ${n}`),
    "index,smiles,reference_smiles,toolkit_parse_failed,primary_valid," +
      "toolkit_valid,agree,primary_tanimoto,toolkit_tanimoto,toolkit_maccs," +
      "toolkit_fraggle",
  ];
  const lines = report.rows.map((r) =>
    [
      r.index,
      r.smiles,
      r.referenceSmiles,
      r.toolkitParseFailed ? 1 : 0,
      r.primaryValid ? 1 : 0,
      r.toolkitValid ? 1 : 0,
      r.agree ? 1 : 0,
      fmt(r.primaryTanimoto),
      fmt(r.toolkitTanimoto),
      fmt(r.toolkitMaccs),
      fmt(r.toolkitFraggle),
    ].join(","),
  );
  fs.writeFileSync(
    path.join(outDir, "agreement.csv"),
    header.concat(lines).join("\n") + "\n",
  );
  fs.writeFileSync(
    path.join(outDir, "summary.json"),
    JSON.stringify(report.summary, null, 2) + "\n",
  );
}
