/**
 * Bootstrap: read session/rater/base-url from query parameters, then drive
 * the rate -> acknowledge -> advance loop against the review service.
 * Submission is single-flight; a conflict re-fetches the next item rather
 * than retrying silently.
 */

import { ApiError, ReviewApi, isDone, type NextItem } from './api.js'
import { buildReportCells } from './report.js'
import { renderDone, renderError, renderItem, renderNotReady, renderReport } from './render.js'
import { applyKey, canSubmit, emptyDraft, setGuess, setScale, type RatingDraft } from './state.js'

interface AppConfig {
  baseUrl: string
  sessionId: string
  raterId: string
}

export function readConfig(search: string): AppConfig | null {
  const params = new URLSearchParams(search)
  const sessionId = params.get('session')
  const raterId = params.get('rater')
  if (!sessionId || !raterId) return null
  return {
    baseUrl: params.get('service') ?? 'http://127.0.0.1:8321',
    sessionId,
    raterId,
  }
}

export class App {
  private draft: RatingDraft = emptyDraft()
  private current: NextItem | null = null
  private focusedScale: 'readability' | 'relevance' | null = 'readability'
  private submitting = false
  private banner: string | undefined

  constructor(
    private readonly doc: Document,
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly config: AppConfig,
  ) {}

  async start(): Promise<void> {
    this.doc.addEventListener('keydown', (event) => this.onKey(event as KeyboardEvent))
    await this.advance()
  }

  private async advance(): Promise<void> {
    try {
      const next = await this.api.nextItem(this.config.sessionId, this.config.raterId)
      if (isDone(next)) {
        this.current = null
        renderDone(this.doc, this.root, next.progress.total)
        await this.tryShowReport()
        return
      }
      this.current = next
      this.draft = emptyDraft()
      this.banner = undefined
      this.redraw()
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err)
      renderError(this.doc, this.root, message, () => void this.advance())
    }
  }

  private redraw(): void {
    if (!this.current) return
    renderItem(
      this.doc,
      this.root,
      this.current,
      this.draft,
      {
        onScale: (field, value) => {
          this.draft = setScale(this.draft, field, value)
          this.focusedScale = field === 'readability' ? 'relevance' : null
          this.redraw()
        },
        onGuess: (guess) => {
          this.draft = setGuess(this.draft, guess)
          this.redraw()
        },
        onSubmit: () => void this.submit(),
      },
      this.banner,
    )
  }

  private onKey(event: KeyboardEvent): void {
    if (!this.current) return
    const updated = applyKey(this.draft, this.focusedScale, event.key)
    if (updated !== this.draft) {
      this.draft = updated
      if (this.focusedScale === 'readability') this.focusedScale = 'relevance'
      this.redraw()
    }
  }

  private async submit(): Promise<void> {
    if (!this.current || this.submitting || !canSubmit(this.draft)) return
    this.submitting = true
    try {
      await this.api.submitRating(this.config.sessionId, {
        rater_id: this.config.raterId,
        item_id: this.current.item_id,
        readability: this.draft.readability!,
        relevance: this.draft.relevance!,
        origin_guess: this.draft.originGuess!,
      })
      await this.advance()
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // conflict: surface it, keep progress untouched, no silent retry
        this.banner = `Submission conflict: ${err.message}`
        this.redraw()
      } else {
        const message = err instanceof ApiError ? err.message : String(err)
        renderError(this.doc, this.root, message, () => this.redraw())
      }
    } finally {
      this.submitting = false
    }
  }

  private async tryShowReport(): Promise<void> {
    try {
      const report = await this.api.report(this.config.sessionId)
      renderReport(this.doc, this.root, buildReportCells(report))
    } catch (err) {
      if (err instanceof ApiError && (err.status === 422 || err.status === 409)) {
        renderNotReady(this.doc, this.root, 'The session is not finalized yet; results appear once every rater finishes.')
      } else {
        const message = err instanceof ApiError ? err.message : String(err)
        renderError(this.doc, this.root, message, () => void this.tryShowReport())
      }
    }
  }
}

export function boot(doc: Document, win: Window): void {
  const root = doc.getElementById('app')
  if (!root) return
  const config = readConfig(win.location.search)
  if (!config) {
    renderNotReady(doc, root, 'Open this page with ?session=<id>&rater=<id> (and optional &service=<base-url>).')
    return
  }
  const api = new ReviewApi(config.baseUrl)
  void new App(doc, root, api, config).start()
}

declare const window: (Window & typeof globalThis) | undefined

if (typeof window !== 'undefined' && typeof document !== 'undefined') {
  boot(document, window)
}
