import { ApiClient } from './api.js'
import type {
  AgreementCell,
  AgreementPayload,
  ProgressPayload,
} from './types.js'

/**
 * Dashboard view models.  This module does NO arithmetic: every number it
 * emits is the verbatim string form of an API response field, so a snapshot
 * of the rendered output is a snapshot of the payload.
 */

export interface DashboardData {
  agreement: AgreementPayload
  progress: ProgressPayload
  disagreementCount: number
}

export async function fetchDashboard(api: ApiClient): Promise<DashboardData> {
  const [agreement, progress, disagreements] = await Promise.all([
    api.agreement(),
    api.progress(),
    api.disagreements(),
  ])
  return {
    agreement,
    progress,
    disagreementCount: disagreements.disagreements.length,
  }
}

export function formatKappa(cell: AgreementCell): string {
  if (cell.kappa === null) return '—'
  // degenerate cells (constant identical raters) are marked, not hidden
  return cell.degenerate ? `${cell.kappa}*` : String(cell.kappa)
}

const AXIS = ['simple', 'complex', 'overall'] as const

/** 3×3 kappa grid rows, header row first; conceptual down, expression across. */
export function agreementRows(payload: AgreementPayload): string[][] {
  const byKey = new Map<string, AgreementCell>()
  for (const cell of payload.cells) {
    byKey.set(`${cell.conceptual}|${cell.expression}`, cell)
  }
  const rows: string[][] = [['conceptual \\ expression', ...AXIS]]
  for (const conceptual of AXIS) {
    const row: string[] = [conceptual]
    for (const expression of AXIS) {
      const cell = byKey.get(`${conceptual}|${expression}`)
      row.push(cell ? formatKappa(cell) : '—')
    }
    rows.push(row)
  }
  return rows
}

export function progressLines(progress: ProgressPayload): string[] {
  const a = progress.accounting
  const lines = [
    `project: ${progress.project_id}`,
    `labeled pairs: ${a.pairs}`,
    `unique sentences: ${a.unique_sentences}`,
    `gold positives: ${a.positives}`,
    `gold negatives: ${a.negatives}`,
    `records: ${a.records}`,
    `queue depth: ${a.queue_depth}`,
    `double annotated: ${a.double_annotated}`,
    `open disagreements: ${a.disagreements_open}`,
    `adjudications: ${a.adjudications}`,
  ]
  for (const [motifId, counts] of Object.entries(a.per_motif)) {
    lines.push(`${motifId}: +${counts.positives} / -${counts.negatives}`)
  }
  return lines
}

export function thresholdLines(progress: ProgressPayload): string[] {
  return Object.entries(progress.thresholds).map(
    ([providerId, info]) => `${providerId}: ${info.threshold} (${info.provenance})`,
  )
}

/** Shown instead of the grid when nothing has been annotated yet. */
export function onboardingHint(data: DashboardData): string | null {
  if (data.progress.accounting.records > 0) return null
  return 'No annotations yet — draw a batch from the Annotate tab to get started.'
}
