import { ApiClient, ApiError } from './api.js'
import type {
  ErrorReport,
  ExpressionValue,
  LabelRecord,
  LabelValue,
  PairContextPayload,
  PairRef,
} from './types.js'

// function words the element checklist skips when carving a motif
// description into things the annotator should locate in the sentence
const STOPWORDS = new Set([
  'a', 'an', 'and', 'at', 'be', 'by', 'for', 'from', 'his', 'her', 'in',
  'into', 'is', 'it', 'its', 'of', 'on', 'or', 'that', 'the', 'their',
  'to', 'was', 'were', 'with',
])

export interface ChecklistItem {
  element: string
  checked: boolean
}

export interface PairCard {
  pair: PairRef
  motifId: string
  description: string | null
  sentence: string
  before: string[]
  after: string[]
  checklist: ChecklistItem[]
  label: LabelValue | null
  expression: ExpressionValue | null
  flagged: boolean
}

export function elementChecklist(description: string | null): ChecklistItem[] {
  if (!description) return []
  const words = description.toLowerCase().match(/[a-z][a-z'-]*/g) ?? []
  const elements: string[] = []
  for (const word of words) {
    if (!STOPWORDS.has(word) && !elements.includes(word)) elements.push(word)
  }
  return elements.map((element) => ({ element, checked: false }))
}

export function makeCard(pair: PairRef, context: PairContextPayload): PairCard {
  return {
    pair,
    motifId: pair.motif_id,
    description: context.motif_description,
    sentence: context.sentence_text,
    before: context.before,
    after: context.after,
    checklist: elementChecklist(context.motif_description),
    label: null,
    expression: null,
    flagged: false,
  }
}

/**
 * Why submit is disabled, or null when the card may be sent.  Mirrors the
 * store's precondition (a positive label must carry an expression), so the
 * invalid request is never made.
 */
export function submitBlocker(card: PairCard): string | null {
  if (card.label === null) return 'choose a label first'
  if (card.label === 'positive' && card.expression === null) {
    return 'a positive label needs an expression complexity (1 = simple, 2 = complex)'
  }
  return null
}

export type FlowEvent =
  | { kind: 'card'; card: PairCard; position: number; total: number }
  | { kind: 'saved'; record: LabelRecord }
  | { kind: 'blocked'; reason: string }
  | { kind: 'conflict'; report: ErrorReport }
  | { kind: 'rejected'; report: ErrorReport }
  | { kind: 'drained' }

export type FlowListener = (event: FlowEvent) => void

/**
 * One-card-at-a-time annotation loop.  The server stays the source of truth:
 * starting a session resumes whatever assignment is still unlabeled, and any
 * 409 means "someone else got there first" — refetch the open set and keep
 * going without losing the annotator's place in the world.
 */
export class AnnotateFlow {
  card: PairCard | null = null
  submitting = false
  private queue: PairRef[] = []
  private index = 0

  constructor(
    private readonly api: ApiClient,
    readonly annotatorId: string,
    private readonly listener: FlowListener = () => {},
  ) {}

  get position(): number {
    return this.index + 1
  }

  get total(): number {
    return this.queue.length
  }

  async start(): Promise<void> {
    const remaining = await this.api.remaining(this.annotatorId)
    if (remaining.pairs.length > 0) {
      this.queue = remaining.pairs
    } else {
      try {
        const batch = await this.api.nextBatch(this.annotatorId)
        this.queue = batch.pairs
      } catch (err) {
        if (err instanceof ApiError && err.code === 'EMPTY_QUEUE') {
          this.queue = []
          this.card = null
          this.listener({ kind: 'drained' })
          return
        }
        throw err
      }
    }
    this.index = 0
    await this.loadCurrent()
  }

  private async loadCurrent(): Promise<void> {
    if (this.index >= this.queue.length) {
      this.card = null
      this.listener({ kind: 'drained' })
      return
    }
    const pair = this.queue[this.index]
    const context = await this.api.pairContext(pair.motif_id, pair.sentence_id)
    this.card = makeCard(pair, context)
    this.listener({
      kind: 'card',
      card: this.card,
      position: this.index + 1,
      total: this.queue.length,
    })
  }

  choose(label: LabelValue): void {
    if (!this.card) return
    this.card.label = label
    if (label === 'negative') this.card.expression = null
  }

  chooseExpression(expression: ExpressionValue): void {
    if (!this.card || this.card.label !== 'positive') return
    this.card.expression = expression
  }

  toggleFlag(): void {
    if (this.card) this.card.flagged = !this.card.flagged
  }

  toggleChecklist(index: number): void {
    const item = this.card?.checklist[index]
    if (item) item.checked = !item.checked
  }

  /** Push the current pair to the back of the queue and move on. */
  async skip(): Promise<void> {
    if (!this.card || this.queue.length < 2) return
    const [pair] = this.queue.splice(this.index, 1)
    this.queue.push(pair)
    await this.loadCurrent()
  }

  async submit(): Promise<void> {
    if (!this.card || this.submitting) return
    const blocker = submitBlocker(this.card)
    if (blocker) {
      this.listener({ kind: 'blocked', reason: blocker })
      return
    }
    this.submitting = true
    try {
      const record = await this.api.postLabel({
        motif_id: this.card.pair.motif_id,
        sentence_id: this.card.pair.sentence_id,
        annotator_id: this.annotatorId,
        label: this.card.label as LabelValue,
        expression: this.card.expression,
        flagged: this.card.flagged,
      })
      this.listener({ kind: 'saved', record })
      this.index += 1
      await this.loadCurrent()
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.listener({ kind: 'conflict', report: err.report })
        const remaining = await this.api.remaining(this.annotatorId)
        this.queue = remaining.pairs
        this.index = 0
        await this.loadCurrent()
      } else if (err instanceof ApiError) {
        // domain rejection (422): stay on the card so nothing is lost
        this.listener({ kind: 'rejected', report: err.report })
      } else {
        throw err
      }
    } finally {
      this.submitting = false
    }
  }
}
