/** Keyboard bindings for the annotation screen. */

export interface AnnotateActions {
  yes(): void
  no(): void
  flag(): void
  simple(): void
  complex(): void
  submit(): void
  skip(): void
}

export interface KeyLike {
  key: string
  target?: unknown
  preventDefault?: () => void
}

function isTypingTarget(target: unknown): boolean {
  if (typeof HTMLElement === 'undefined' || !(target instanceof HTMLElement)) {
    return false
  }
  return (
    target instanceof HTMLInputElement ||
    target instanceof HTMLTextAreaElement ||
    target.isContentEditable
  )
}

/**
 * Map one key event onto an action.  Returns true when handled so callers
 * know whether to preventDefault.  Shortcuts never fire while the user is
 * typing into a note field.
 */
export function handleAnnotateKey(event: KeyLike, actions: AnnotateActions): boolean {
  if (isTypingTarget(event.target)) return false
  switch (event.key.toLowerCase()) {
    case 'y':
      actions.yes()
      return true
    case 'n':
      actions.no()
      return true
    case 'f':
      actions.flag()
      return true
    case '1':
      actions.simple()
      return true
    case '2':
      actions.complex()
      return true
    case 'enter':
      actions.submit()
      return true
    case 'arrowright':
      actions.skip()
      return true
    default:
      return false
  }
}

export function bindAnnotateShortcuts(
  win: Pick<Window, 'addEventListener' | 'removeEventListener'>,
  actions: AnnotateActions,
): () => void {
  const onKeyDown = (event: KeyboardEvent) => {
    if (handleAnnotateKey(event, actions)) event.preventDefault()
  }
  win.addEventListener('keydown', onKeyDown)
  return () => win.removeEventListener('keydown', onKeyDown)
}
