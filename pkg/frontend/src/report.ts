/**
 * Formatting for the finalized report screen. Values come straight from
 * the service payload; this module only shapes them into display strings.
 */

import type { ReportPayload } from './api.js'

export interface ReportCells {
  identificationRows: { label: string; ai: string; human: string; total: string }[]
  pValueRow: { ai: string; human: string; total: string }
  ratingRows: { measure: string; ai: string; human: string; p: string }[]
  agreementRows: { measure: string; percentAgreement: string; ac1: string }[]
}

export function formatCount(n: number): string {
  return Number.isInteger(n) ? String(n) : n.toFixed(1)
}

export function formatCell(cell: { correct: number; pct: string }): string {
  return `${formatCount(cell.correct)} (${cell.pct})`
}

export function formatP(p: number): string {
  return p < 0.001 ? '< 0.001' : `= ${p.toFixed(3)}`
}

export function buildReportCells(report: ReportPayload): ReportCells {
  const identificationRows = Object.entries(report.per_rater).map(([rater, cells]) => ({
    label: rater,
    ai: formatCell(cells['AI']!),
    human: formatCell(cells['Human']!),
    total: formatCell(cells['Total']!),
  }))
  identificationRows.push({
    label: 'Overall',
    ai: formatCell(report.pooled['AI']!),
    human: formatCell(report.pooled['Human']!),
    total: formatCell(report.pooled['Total']!),
  })
  const tests = report.identification_tests
  const pValueRow = {
    ai: formatP(tests['AI']!.p_value),
    human: formatP(tests['Human']!.p_value),
    total: formatP(tests['Total']!.p_value),
  }
  const ratingRows = Object.entries(report.ratings).map(([measure, row]) => ({
    measure,
    ai: `${row.ai_mean.toFixed(2)} (${row.ai_sd.toFixed(2)})`,
    human: `${row.human_mean.toFixed(2)} (${row.human_sd.toFixed(2)})`,
    p: row.p_value.toFixed(2),
  }))
  const agreementRows = report.agreement
    ? Object.entries(report.agreement).map(([measure, row]) => ({
        measure,
        percentAgreement: row.percent_agreement.toFixed(2),
        ac1: row.ac1.toFixed(2),
      }))
    : []
  return { identificationRows, pValueRow, ratingRows, agreementRows }
}
