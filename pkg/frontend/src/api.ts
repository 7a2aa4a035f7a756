/**
 * Typed client for the review service wire API.
 *
 * The fetch implementation is injected so tests can run against a scripted
 * server. Conflicts (duplicate rating, finalized session) surface as
 * ApiError with the HTTP status; callers decide how to present them.
 */

export interface Progress {
  done: number
  total: number
}

export interface NextItem {
  item_id: string
  text: string
  progress: Progress
}

export interface SessionDone {
  done: true
  progress: Progress
}

export type NextResponse = NextItem | SessionDone

export interface RatingSubmission {
  rater_id: string
  item_id: string
  readability: number
  relevance: number
  origin_guess: 'AI' | 'Human'
}

export interface IdentificationCell {
  correct: number
  total: number
  pct: string
}

export interface MeasureRow {
  ai_mean: number
  ai_sd: number
  human_mean: number
  human_sd: number
  p_value: number
}

export interface AgreementRow {
  table: { a: number; b: number; c: number; d: number }
  percent_agreement: number
  ac1: number
}

export interface ReportPayload {
  per_rater: Record<string, Record<string, IdentificationCell>>
  pooled: Record<string, IdentificationCell>
  identification_tests: Record<string, { p_value: number }>
  ratings: Record<string, MeasureRow>
  agreement: Record<string, AgreementRow> | null
  dichotomize_threshold: number
  null_rate: number
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message)
    this.name = 'ApiError'
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>

function isDone(body: NextResponse): body is SessionDone {
  return (body as SessionDone).done === true
}

export { isDone }

export class ReviewApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response
    try {
      resp = await this.fetchImpl(`${this.baseUrl}${path}`, init)
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`)
    }
    const text = await resp.text()
    if (!resp.ok) {
      let detail = text
      try {
        detail = (JSON.parse(text) as { detail?: string }).detail ?? text
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(resp.status, detail)
    }
    return JSON.parse(text) as T
  }

  nextItem(sessionId: string, raterId: string): Promise<NextResponse> {
    const rater = encodeURIComponent(raterId)
    return this.request<NextResponse>(`/sessions/${sessionId}/next?rater=${rater}`)
  }

  submitRating(sessionId: string, rating: RatingSubmission): Promise<{ accepted: boolean }> {
    return this.request(`/sessions/${sessionId}/ratings`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(rating),
    })
  }

  finalize(sessionId: string, partial = false): Promise<{ finalized: boolean }> {
    return this.request(`/sessions/${sessionId}/finalize`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ partial }),
    })
  }

  report(sessionId: string): Promise<ReportPayload> {
    return this.request<ReportPayload>(`/sessions/${sessionId}/report`)
  }
}
