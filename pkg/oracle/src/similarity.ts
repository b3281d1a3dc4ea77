/** Bit-string similarity helpers for the toolkit's fingerprint output
 * (strings of '0'/'1'). */

export function tanimotoBitStrings(a: string, b: string): number {
  if (a.length !== b.length) {
    throw new Error(`fingerprint widths differ: ${a.length} vs ${b.length}`);
  }
  let inter = 0;
  let union = 0;
  for (let i = 0; i < a.length; i++) {
    const x = a.charCodeAt(i) === 49;
    const y = b.charCodeAt(i) === 49;
    if (x && y) inter++;
    if (x || y) union++;
  }
  return union === 0 ? 1.0 : inter / union;
}

/** Pearson correlation over pairs where both values are finite. */
export function pearson(xs: number[], ys: number[]): number {
  const pairs: Array<[number, number]> = [];
  for (let i = 0; i < Math.min(xs.length, ys.length); i++) {
    if (Number.isFinite(xs[i]) && Number.isFinite(ys[i])) {
      pairs.push([xs[i], ys[i]]);
    }
  }
  const n = pairs.length;
  if (n < 2) return NaN;
  const mx = pairs.reduce((s, p) => s + p[0], 0) / n;
  const my = pairs.reduce((s, p) => s + p[1], 0) / n;
  let sxy = 0;
  let sxx = 0;
  let syy = 0;
  for (const [x, y] of pairs) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  if (sxx === 0 || syy === 0) return NaN;
  return sxy / Math.sqrt(sxx * syy);
}
