/** Per-molecule comparison between the generator's own chemistry and the
 * reference toolkit. One row per corpus molecule; nothing is dropped,
 * parse failures carry a flag instead. */
export interface AgreementRow {
  index: number;
  smiles: string;
  referenceSmiles: string;
  /** Toolkit failed to parse/sanitize the corpus molecule. */
  toolkitParseFailed: boolean;
  primaryValid: boolean;
  toolkitValid: boolean;
  /** Validity verdicts coincide. */
  agree: boolean;
  /** Generator-side Morgan-style Tanimoto against the paired reference. */
  primaryTanimoto: number;
  /** Toolkit Morgan Tanimoto against the paired reference (NaN when
   * either side fails to parse). */
  toolkitTanimoto: number;
  /** Toolkit MACCS-keys Tanimoto (NaN when unavailable). */
  toolkitMaccs: number;
  /** Fraggle similarity; null when the toolkit build does not expose it. */
  toolkitFraggle: number | null;
}

export interface AgreementSummary {
  nMolecules: number;
  validityAgreementRate: number;
  pearsonTanimoto: number;
  toolkitName: string;
  toolkitVersion: string;
  morganRadius: number;
  morganBits: number;
  maccsAvailable: boolean;
  fraggleAvailable: boolean;
  /** Threshold/settings notes recorded in the report header. */
  notes: string[];
}

export interface AgreementReport {
  summary: AgreementSummary;
  rows: AgreementRow[];
}
