/** Batch entry point:
 *
 *   node dist/cli.js --corpus corpus.smi --reference reference.smi \
 *     --primary-csv pairwise.csv --out-dir out/
 *
 * Exit codes: 0 ok, 1 usage, 2 toolkit missing or input unreadable.
 */

import { crosscheck, writeReport } from "./crosscheck";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad argument ${key}`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

async function main(): Promise<number> {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
    for (const required of ["corpus", "reference", "primary-csv", "out-dir"]) {
      if (!args.has(required)) throw new Error(`missing --${required}`);
    }
  } catch (err) {
    console.error(`usage error: ${(err as Error).message}`);
    console.error(
      "usage: cli.js --corpus F --reference F --primary-csv F --out-dir D",
    );
    return 1;
  }
  try {
    const report = await crosscheck(
      args.get("corpus")!,
      args.get("reference")!,
      args.get("primary-csv")!,
    );
    writeReport(report, args.get("out-dir")!);
    const s = report.summary;
    console.log(
      `${s.nMolecules} molecules | validity agreement ` +
        `${(100 * s.validityAgreementRate).toFixed(1)}% | ` +
        `tanimoto pearson r ${s.pearsonTanimoto.toFixed(4)}`,
    );
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

main().then((code) => process.exit(code));
