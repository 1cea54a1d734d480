/**
 * Wire types for the gateway REST API.  These mirror the server's JSON
 * payloads field-for-field; nothing here is computed client-side.
 */

export type LabelValue = 'positive' | 'negative'
export type ExpressionValue = 'simple' | 'complex'

export interface PairRef {
  motif_id: string
  sentence_id: string
}

export interface BatchPayload {
  batch_id: string
  annotator_id: string
  pairs: PairRef[]
  double_subset: PairRef[]
}

export interface RemainingPayload {
  annotator_id: string
  pairs: PairRef[]
}

export interface LabelRecord {
  motif_id: string
  sentence_id: string
  annotator_id: string
  label: LabelValue
  expression: ExpressionValue | null
  flagged: boolean
  timestamp: string
}

export interface LabelIn {
  motif_id: string
  sentence_id: string
  annotator_id: string
  label: LabelValue
  expression?: ExpressionValue | null
  flagged?: boolean
}

export interface LabelsPayload {
  records: LabelRecord[]
}

export interface Disagreement {
  motif_id: string
  sentence_id: string
  records: LabelRecord[]
}

export interface DisagreementsPayload {
  disagreements: Disagreement[]
}

export interface AdjudicationIn {
  motif_id: string
  sentence_id: string
  final_label: LabelValue
  final_expression?: ExpressionValue | null
  resolver_id: string
  note?: string
}

export interface AdjudicationPayload {
  motif_id: string
  sentence_id: string
  final_label: LabelValue
  final_expression: ExpressionValue | null
  resolver_id: string
  note: string
  timestamp: string
}

export interface MotifPayload {
  motif_id: string
  theme: string
  description: string
  conceptual: string
  graph_node_count: number | null
  page_refs: string[]
}

export interface MotifsPayload {
  motifs: MotifPayload[]
}

export interface PairContextPayload {
  motif_id: string
  sentence_id: string
  motif_description: string | null
  sentence_text: string
  before: string[]
  after: string[]
}

export interface AgreementCell {
  conceptual: string
  expression: string
  kappa: number | null
  degenerate: boolean
  pairs: number
  motifs: number
}

export interface AgreementPayload {
  double_pairs: number
  cells: AgreementCell[]
}

export interface PerMotifCounts {
  positives: number
  negatives: number
}

export interface Accounting {
  pairs: number
  unique_sentences: number
  positives: number
  negatives: number
  per_motif: Record<string, PerMotifCounts>
  records: number
  queue_depth: number
  assigned_pairs: number
  double_annotated: number
  disagreements_open: number
  adjudications: number
}

export interface ThresholdInfo {
  threshold: number
  provenance: string
}

export interface ProgressPayload {
  project_id: string
  accounting: Accounting
  thresholds: Record<string, ThresholdInfo>
}

export interface RecalibratePayload {
  provider_id: string
  threshold: number
  provenance: string
}

export interface JobPayload {
  job_id: string
  kind?: string
  status: 'pending' | 'running' | 'done' | 'error'
  result?: unknown
  error?: ErrorReport
}

export interface HealthPayload {
  status: string
  project_id: string
}

/** Module-qualified error body every non-2xx response carries. */
export interface ErrorReport {
  module: string
  code: string
  message: string
  detail: Record<string, unknown>
}
