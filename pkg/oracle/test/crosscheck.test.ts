import * as path from "node:path";

import { describe, expect, it } from "vitest";

import { crosscheck, readPrimaryCsv, readSmilesLines } from "../src/crosscheck";
import { pearson, tanimotoBitStrings } from "../src/similarity";
import { loadToolkit, toToolkitDialect } from "../src/rdkit";

const FIXTURES = path.join(__dirname, "..", "fixtures");
const corpus = path.join(FIXTURES, "corpus.smi");
const reference = path.join(FIXTURES, "reference.smi");
const pairwise = path.join(FIXTURES, "pairwise.csv");

describe("similarity helpers", () => {
  it("tanimoto of identical non-empty bit strings is 1", () => {
    expect(tanimotoBitStrings("0110", "0110")).toBe(1.0);
  });

  it("tanimoto counts intersection over union", () => {
    // bits {1,2,3} vs {2,3,4}: 2 common, 4 union.
    expect(tanimotoBitStrings("01110", "00111")).toBeCloseTo(0.5, 12);
  });

  it("tanimoto of all-zero strings is 1 by convention", () => {
    expect(tanimotoBitStrings("0000", "0000")).toBe(1.0);
  });

  it("tanimoto rejects width mismatch", () => {
    expect(() => tanimotoBitStrings("01", "011")).toThrow(/width/);
  });

  it("pearson matches a hand-computed case and ignores NaN pairs", () => {
    expect(pearson([1, 2, 3], [2, 4, 6])).toBeCloseTo(1.0, 12);
    expect(pearson([1, 2, 3], [3, 2, 1])).toBeCloseTo(-1.0, 12);
    expect(pearson([1, 2, 3, NaN], [2, 4, 6, 100])).toBeCloseTo(1.0, 12);
  });
});

describe("toolkit wrapper", () => {
  it("loads RDKit and reports validity verdicts", async () => {
    const toolkit = await loadToolkit();
    expect(toolkit.version.length).toBeGreaterThan(0);
    expect(toolkit.isValid("CCO")).toBe(true);
    expect(toolkit.isValid("C(C)(C)(C)(C)C")).toBe(false); // pentavalent C
  });

  it("translates silicon into the bracketed standard-SMILES form", async () => {
    expect(toToolkitDialect("SiC(Si)S")).toBe("[Si]C([Si])S");
    const toolkit = await loadToolkit();
    expect(toolkit.isValid("SiC")).toBe(true); // bare Si would not parse
  });

  it("parses the ring-closure case C1CC1 to the same triangle", async () => {
    // Independent structural parse: 3 atoms, 3 single bonds closing a
    // 3-cycle, matching the generator's reading of the same string.
    const toolkit = await loadToolkit();
    const s = toolkit.structure("C1CC1");
    expect(s).not.toBeNull();
    expect(s!.atomCount).toBe(3);
    const edges = s!.bonds
      .map(([a, b, o]) => [Math.min(a, b), Math.max(a, b), o].join("-"))
      .sort();
    expect(edges).toEqual(["0-1-1", "0-2-1", "1-2-1"]);
  });

  it("reads bond orders structurally: O=C=O has two double bonds", async () => {
    const toolkit = await loadToolkit();
    const s = toolkit.structure("O=C=O");
    expect(s!.atomCount).toBe(3);
    expect(s!.bonds.map(([, , o]) => o).sort()).toEqual([2, 2]);
  });

  it("computes Morgan fingerprints of the requested width", async () => {
    const toolkit = await loadToolkit();
    const fp = toolkit.morganFp("CCO", 2, 2048);
    expect(fp).not.toBeNull();
    expect(fp!.length).toBe(2048);
  });
});

describe("crosscheck on the 200-molecule fixture corpus", () => {
  it("S1: validity agreement with the toolkit is at least 95%", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    const rate = report.summary.validityAgreementRate;
    console.log(
      `S1 validity agreement: ${(100 * rate).toFixed(1)}% ` +
        `on ${report.summary.nMolecules} molecules`,
    );
    expect(report.summary.nMolecules).toBe(200);
    expect(rate).toBeGreaterThanOrEqual(0.95);
  });

  it("S2: primary vs toolkit Morgan-Tanimoto Pearson r >= 0.9 on 100 pairs", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    const finite = report.rows.filter(
      (r) => Number.isFinite(r.primaryTanimoto) && Number.isFinite(r.toolkitTanimoto),
    );
    expect(finite.length).toBeGreaterThanOrEqual(100);
    const first100 = finite.slice(0, 100);
    const r = pearson(
      first100.map((x) => x.primaryTanimoto),
      first100.map((x) => x.toolkitTanimoto),
    );
    console.log(`S2 tanimoto pearson r: ${r.toFixed(4)} on ${first100.length} pairs`);
    expect(r).toBeGreaterThanOrEqual(0.9);
  });

  it("never drops molecules; parse failures appear as flagged rows", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    expect(report.rows.length).toBe(readSmilesLines(corpus).length);
    const flagged = report.rows.filter((r) => r.toolkitParseFailed);
    expect(flagged.length).toBeGreaterThan(0);
    for (const row of flagged) {
      expect(row.toolkitValid).toBe(false);
    }
  });

  it("summary agreement rate equals the mean of row-level indicators", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    const recomputed =
      report.rows.reduce((s, r) => s + (r.agree ? 1 : 0), 0) / report.rows.length;
    expect(report.summary.validityAgreementRate).toBeCloseTo(recomputed, 12);
  });

  it("records MACCS values and the Fraggle availability note", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    expect(report.summary.maccsAvailable).toBe(true);
    const valid = report.rows.filter((r) => r.toolkitValid);
    expect(valid.every((r) => Number.isFinite(r.toolkitMaccs))).toBe(true);
    if (!report.summary.fraggleAvailable) {
      expect(report.rows.every((r) => r.toolkitFraggle === null)).toBe(true);
      expect(report.summary.notes.join(" ")).toMatch(/fraggle/i);
    }
  });
});

describe("crosscheck edge cases", () => {
  it("corpus equal to reference gives toolkit Tanimoto 1.0 everywhere", async () => {
    const textbook = path.join(FIXTURES, "textbook.smi");
    const csv = path.join(FIXTURES, "textbook_pairwise.csv");
    const report = await crosscheck(textbook, textbook, csv);
    for (const row of report.rows) {
      expect(row.toolkitTanimoto).toBeCloseTo(1.0, 12);
    }
  });

  it("ten textbook molecules agree 10/10 on validity", async () => {
    const textbook = path.join(FIXTURES, "textbook.smi");
    const csv = path.join(FIXTURES, "textbook_pairwise.csv");
    const report = await crosscheck(textbook, textbook, csv);
    expect(report.rows.length).toBe(10);
    expect(report.rows.every((r) => r.agree && r.toolkitValid)).toBe(true);
  });

  it("a deliberately pentavalent-carbon SMILES is invalid on both sides", async () => {
    const report = await crosscheck(corpus, reference, pairwise);
    const row = report.rows.find((r) => r.smiles === "C(C)(C)(C)(C)C");
    expect(row).toBeDefined();
    expect(row!.primaryValid).toBe(false);
    expect(row!.toolkitValid).toBe(false);
    expect(row!.agree).toBe(true);
  });

  it("reads the primary csv columns it depends on", () => {
    const rows = readPrimaryCsv(pairwise);
    expect(rows.length).toBe(200);
    expect(rows[0].tanimoto).toBeGreaterThan(0);
  });
});
