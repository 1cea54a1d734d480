import { ApiClient, ApiError } from './api.js'
import type {
  Disagreement,
  ErrorReport,
  ExpressionValue,
  LabelValue,
  PairContextPayload,
} from './types.js'

export interface AdjudicationCard {
  disagreement: Disagreement
  context: PairContextPayload | null
  finalLabel: LabelValue | null
  finalExpression: ExpressionValue | null
  note: string
}

export function adjudicationBlocker(card: AdjudicationCard): string | null {
  if (card.finalLabel === null) return 'choose a final label'
  if (card.finalLabel === 'positive' && card.finalExpression === null) {
    return 'a positive ruling needs an expression complexity'
  }
  return null
}

export type AdjudicateEvent =
  | { kind: 'list'; disagreements: Disagreement[] }
  | { kind: 'card'; card: AdjudicationCard }
  | { kind: 'blocked'; reason: string }
  | { kind: 'resolved'; motifId: string; sentenceId: string }
  | { kind: 'stale'; report: ErrorReport }
  | { kind: 'rejected'; report: ErrorReport }

export type AdjudicateListener = (event: AdjudicateEvent) => void

/**
 * Disagreement review: both annotators' records side by side, resolver picks
 * the final ruling.  The server arbitrates; if the pair was resolved
 * elsewhere meanwhile (NOT_IN_QUEUE), the list simply refreshes.
 */
export class AdjudicateFlow {
  list: Disagreement[] = []
  card: AdjudicationCard | null = null
  submitting = false

  constructor(
    private readonly api: ApiClient,
    readonly resolverId: string,
    private readonly listener: AdjudicateListener = () => {},
  ) {}

  async refresh(): Promise<void> {
    const payload = await this.api.disagreements()
    this.list = payload.disagreements
    this.card = null
    this.listener({ kind: 'list', disagreements: this.list })
  }

  async open(index: number): Promise<void> {
    const disagreement = this.list[index]
    if (!disagreement) return
    let context: PairContextPayload | null = null
    try {
      context = await this.api.pairContext(
        disagreement.motif_id,
        disagreement.sentence_id,
      )
    } catch {
      context = null // context is a nicety; the records carry the decision
    }
    this.card = {
      disagreement,
      context,
      finalLabel: null,
      finalExpression: null,
      note: '',
    }
    this.listener({ kind: 'card', card: this.card })
  }

  rule(label: LabelValue): void {
    if (!this.card) return
    this.card.finalLabel = label
    if (label === 'negative') this.card.finalExpression = null
  }

  ruleExpression(expression: ExpressionValue): void {
    if (!this.card || this.card.finalLabel !== 'positive') return
    this.card.finalExpression = expression
  }

  setNote(note: string): void {
    if (this.card) this.card.note = note
  }

  async submit(): Promise<void> {
    if (!this.card || this.submitting) return
    const blocker = adjudicationBlocker(this.card)
    if (blocker) {
      this.listener({ kind: 'blocked', reason: blocker })
      return
    }
    const { disagreement } = this.card
    this.submitting = true
    try {
      await this.api.postAdjudication({
        motif_id: disagreement.motif_id,
        sentence_id: disagreement.sentence_id,
        final_label: this.card.finalLabel as LabelValue,
        final_expression: this.card.finalExpression,
        resolver_id: this.resolverId,
        note: this.card.note,
      })
      this.listener({
        kind: 'resolved',
        motifId: disagreement.motif_id,
        sentenceId: disagreement.sentence_id,
      })
      await this.refresh()
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // resolved by someone else in the meantime; server wins
        this.listener({ kind: 'stale', report: err.report })
        await this.refresh()
      } else if (err instanceof ApiError) {
        this.listener({ kind: 'rejected', report: err.report })
      } else {
        throw err
      }
    } finally {
      this.submitting = false
    }
  }
}
