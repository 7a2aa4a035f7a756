/**
 * Rating draft state for the current passage.
 *
 * Submit stays disabled until all three inputs (two 1-9 scales and the
 * origin call) are set. A rating only counts as completed once the service
 * acknowledges it; progress comes from the service payload, never from
 * local bookkeeping.
 */

export type OriginGuess = 'AI' | 'Human'

export interface RatingDraft {
  readability: number | null
  relevance: number | null
  originGuess: OriginGuess | null
}

export function emptyDraft(): RatingDraft {
  return { readability: null, relevance: null, originGuess: null }
}

export function setScale(draft: RatingDraft, field: 'readability' | 'relevance', value: number): RatingDraft {
  if (!Number.isInteger(value) || value < 1 || value > 9) {
    return draft
  }
  return { ...draft, [field]: value }
}

export function setGuess(draft: RatingDraft, guess: OriginGuess): RatingDraft {
  return { ...draft, originGuess: guess }
}

export function canSubmit(draft: RatingDraft): boolean {
  return draft.readability !== null && draft.relevance !== null && draft.originGuess !== null
}

/** Digits 1-9 drive whichever scale currently has focus. */
export function applyKey(
  draft: RatingDraft,
  focused: 'readability' | 'relevance' | null,
  key: string,
): RatingDraft {
  if (focused === null) return draft
  if (!/^[1-9]$/.test(key)) return draft
  return setScale(draft, focused, Number(key))
}
