/**
 * DOM rendering. Passages land in the page via textContent only, so
 * markup-looking text displays literally. The renderer never receives or
 * stores origin information; it can only show what the service sent.
 */

import type { NextItem } from './api.js'
import type { ReportCells } from './report.js'
import { canSubmit, type RatingDraft } from './state.js'

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

export interface ItemScreenHandlers {
  onScale(field: 'readability' | 'relevance', value: number): void
  onGuess(guess: 'AI' | 'Human'): void
  onSubmit(): void
}

function scaleRow(
  doc: Document,
  field: 'readability' | 'relevance',
  label: string,
  current: number | null,
  handlers: ItemScreenHandlers,
): HTMLElement {
  const row = el(doc, 'div', 'scale-row')
  row.appendChild(el(doc, 'span', 'scale-label', label))
  for (let value = 1; value <= 9; value++) {
    const button = el(doc, 'button', 'scale-button', String(value))
    button.dataset.field = field
    button.dataset.value = String(value)
    if (current === value) button.classList.add('selected')
    button.addEventListener('click', () => handlers.onScale(field, value))
    row.appendChild(button)
  }
  return row
}

export function renderItem(
  doc: Document,
  root: HTMLElement,
  item: NextItem,
  draft: RatingDraft,
  handlers: ItemScreenHandlers,
  errorBanner?: string,
): void {
  root.replaceChildren()
  const header = el(doc, 'div', 'progress', `Passage ${item.progress.done + 1} of ${item.progress.total}`)
  root.appendChild(header)
  if (errorBanner) {
    root.appendChild(el(doc, 'div', 'error-banner', errorBanner))
  }
  const passage = el(doc, 'pre', 'passage')
  passage.textContent = item.text // literal rendering, no markup interpretation
  root.appendChild(passage)
  root.appendChild(scaleRow(doc, 'readability', 'Readability (1 worst .. 9 best)', draft.readability, handlers))
  root.appendChild(scaleRow(doc, 'relevance', 'Clinical relevance (1 .. 9)', draft.relevance, handlers))

  const guessRow = el(doc, 'div', 'guess-row')
  guessRow.appendChild(el(doc, 'span', 'scale-label', 'Written by'))
  for (const guess of ['Human', 'AI'] as const) {
    const button = el(doc, 'button', 'guess-button', guess)
    button.dataset.guess = guess
    if (draft.originGuess === guess) button.classList.add('selected')
    button.addEventListener('click', () => handlers.onGuess(guess))
    guessRow.appendChild(button)
  }
  root.appendChild(guessRow)

  const submit = el(doc, 'button', 'submit-button', 'Submit rating')
  submit.id = 'submit'
  submit.disabled = !canSubmit(draft)
  submit.addEventListener('click', () => handlers.onSubmit())
  root.appendChild(submit)
}

export function renderDone(doc: Document, root: HTMLElement, total: number): void {
  root.replaceChildren()
  root.appendChild(el(doc, 'h2', 'done', 'Review complete'))
  root.appendChild(el(doc, 'p', undefined, `All ${total} passages rated. Thank you.`))
}

export function renderNotReady(doc: Document, root: HTMLElement, message: string): void {
  root.replaceChildren()
  root.appendChild(el(doc, 'h2', undefined, 'Report not ready'))
  root.appendChild(el(doc, 'p', 'not-ready', message))
}

export function renderError(doc: Document, root: HTMLElement, message: string, onRetry: () => void): void {
  root.replaceChildren()
  root.appendChild(el(doc, 'h2', undefined, 'Service unreachable'))
  root.appendChild(el(doc, 'p', 'error-banner', message))
  const retry = el(doc, 'button', 'retry-button', 'Retry')
  retry.addEventListener('click', onRetry)
  root.appendChild(retry)
}

export function renderReport(doc: Document, root: HTMLElement, cells: ReportCells): void {
  root.replaceChildren()
  root.appendChild(el(doc, 'h2', undefined, 'Review results'))

  const idTable = el(doc, 'table', 'identification')
  const head = el(doc, 'tr')
  for (const h of ['', 'AI', 'Human', 'Total']) head.appendChild(el(doc, 'th', undefined, h))
  idTable.appendChild(head)
  for (const row of cells.identificationRows) {
    const tr = el(doc, 'tr')
    tr.appendChild(el(doc, 'td', 'row-label', row.label))
    for (const value of [row.ai, row.human, row.total]) tr.appendChild(el(doc, 'td', 'cell', value))
    idTable.appendChild(tr)
  }
  const pRow = el(doc, 'tr')
  pRow.appendChild(el(doc, 'td', 'row-label', 'p-value'))
  for (const value of [cells.pValueRow.ai, cells.pValueRow.human, cells.pValueRow.total]) {
    pRow.appendChild(el(doc, 'td', 'cell p-value', value))
  }
  idTable.appendChild(pRow)
  root.appendChild(idTable)

  const ratingTable = el(doc, 'table', 'ratings')
  for (const row of cells.ratingRows) {
    const tr = el(doc, 'tr')
    tr.appendChild(el(doc, 'td', 'row-label', row.measure))
    tr.appendChild(el(doc, 'td', 'cell', row.ai))
    tr.appendChild(el(doc, 'td', 'cell', row.human))
    tr.appendChild(el(doc, 'td', 'cell', row.p))
    ratingTable.appendChild(tr)
  }
  root.appendChild(ratingTable)

  if (cells.agreementRows.length) {
    const list = el(doc, 'div', 'agreement')
    for (const row of cells.agreementRows) {
      list.appendChild(
        el(
          doc,
          'p',
          'agreement-row',
          `${row.measure}: percent agreement ${row.percentAgreement}, AC1 ${row.ac1}`,
        ),
      )
    }
    root.appendChild(list)
  }
}
