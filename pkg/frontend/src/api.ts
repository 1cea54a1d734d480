import type {
  AdjudicationIn,
  AdjudicationPayload,
  AgreementPayload,
  BatchPayload,
  DisagreementsPayload,
  ErrorReport,
  HealthPayload,
  JobPayload,
  LabelIn,
  LabelRecord,
  LabelsPayload,
  MotifPayload,
  MotifsPayload,
  PairContextPayload,
  ProgressPayload,
  RecalibratePayload,
  RemainingPayload,
} from './types.js'

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly report: ErrorReport,
  ) {
    super(`${report.code}: ${report.message}`)
    this.name = 'ApiError'
  }

  get code(): string {
    return this.report.code
  }

  /** 409s mean someone else got there first: refetch and continue. */
  get isConflict(): boolean {
    return this.status === 409
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export interface ApiClientOptions {
  baseUrl?: string
  token?: string | null
  fetchFn?: FetchLike
}

function query(params: Record<string, string | number | undefined>): string {
  const search = new URLSearchParams()
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined) search.set(key, String(value))
  }
  const encoded = search.toString()
  return encoded ? `?${encoded}` : ''
}

/**
 * Thin typed wrapper over the gateway REST API.  The UI talks to the server
 * through this class only; there is no other mutation path.
 */
export class ApiClient {
  private readonly baseUrl: string
  private readonly token: string | null
  private readonly fetchFn: FetchLike

  constructor(options: ApiClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? '').replace(/\/$/, '')
    this.token = options.token ?? null
    // wrap instead of storing the global directly: native fetch throws
    // "Illegal invocation" when called with a foreign receiver
    this.fetchFn = options.fetchFn ?? ((input, init) => fetch(input, init))
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {}
    if (body !== undefined) headers['content-type'] = 'application/json'
    if (this.token) headers['authorization'] = `Bearer ${this.token}`
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    })
    if (!response.ok) {
      let report: ErrorReport
      try {
        report = (await response.json()) as ErrorReport
      } catch {
        report = {
          module: 'gateway',
          code: `HTTP_${response.status}`,
          message: response.statusText,
          detail: {},
        }
      }
      throw new ApiError(response.status, report)
    }
    return (await response.json()) as T
  }

  health(): Promise<HealthPayload> {
    return this.request('GET', '/api/health')
  }

  nextBatch(annotator: string, size?: number): Promise<BatchPayload> {
    return this.request('GET', `/api/batches/next${query({ annotator, size })}`)
  }

  remaining(annotator: string): Promise<RemainingPayload> {
    return this.request('GET', `/api/batches/remaining${query({ annotator })}`)
  }

  postLabel(label: LabelIn): Promise<LabelRecord> {
    return this.request('POST', '/api/labels', label)
  }

  labels(filter: { motif_id?: string; sentence_id?: string; annotator_id?: string } = {}): Promise<LabelsPayload> {
    return this.request('GET', `/api/labels${query(filter)}`)
  }

  disagreements(): Promise<DisagreementsPayload> {
    return this.request('GET', '/api/disagreements')
  }

  postAdjudication(adjudication: AdjudicationIn): Promise<AdjudicationPayload> {
    return this.request('POST', '/api/adjudications', adjudication)
  }

  motifs(): Promise<MotifsPayload> {
    return this.request('GET', '/api/motifs')
  }

  motif(motifId: string): Promise<MotifPayload> {
    return this.request('GET', `/api/motifs/${encodeURIComponent(motifId)}`)
  }

  pairContext(motifId: string, sentenceId: string): Promise<PairContextPayload> {
    const pairId = encodeURIComponent(`${motifId}|${sentenceId}`)
    return this.request('GET', `/api/pairs/${pairId}/context`)
  }

  agreement(): Promise<AgreementPayload> {
    return this.request('GET', '/api/agreement')
  }

  progress(): Promise<ProgressPayload> {
    return this.request('GET', '/api/progress')
  }

  recalibrate(providerId: string, positive: number[], negative: number[]): Promise<RecalibratePayload> {
    return this.request('POST', '/api/recalibrate', {
      provider_id: providerId,
      positive_scores: positive,
      negative_scores: negative,
    })
  }

  job(jobId: string): Promise<JobPayload> {
    return this.request('GET', `/api/jobs/${encodeURIComponent(jobId)}`)
  }
}
