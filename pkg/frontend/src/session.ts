/** Fatigue guard: annotation sessions should pause after an hour. */

export const BREAK_AFTER_MS = 60 * 60 * 1000

export class SessionTimer {
  private startedAt: number
  private dismissed = false

  constructor(private readonly now: () => number = Date.now) {
    this.startedAt = this.now()
  }

  elapsedMs(): number {
    return this.now() - this.startedAt
  }

  shouldSuggestBreak(): boolean {
    return !this.dismissed && this.elapsedMs() >= BREAK_AFTER_MS
  }

  /** "Remind me later" — stays quiet until the next reset. */
  dismiss(): void {
    this.dismissed = true
  }

  /** Call when the annotator actually took the break. */
  reset(): void {
    this.startedAt = this.now()
    this.dismissed = false
  }
}
