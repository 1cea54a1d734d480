/**
 * Browser entry point: hash-routed views over the gateway API.
 *
 *   #annotate   — one pair card at a time (y/n/f, 1/2, Enter, → to skip)
 *   #adjudicate — disagreement queue for resolvers
 *   #dashboard  — agreement grid, progress accounting, thresholds
 */

import { ApiClient, ApiError } from './api.js'
import { AnnotateFlow } from './annotate.js'
import type { PairCard } from './annotate.js'
import { AdjudicateFlow } from './adjudicate.js'
import {
  agreementRows,
  fetchDashboard,
  onboardingHint,
  progressLines,
  thresholdLines,
} from './dashboard.js'
import { escapeHtml, listHtml, tableHtml } from './html.js'
import { SessionTimer } from './session.js'
import { bindAnnotateShortcuts } from './shortcuts.js'

const api = new ApiClient({
  baseUrl: '',
  token: new URLSearchParams(location.search).get('token'),
})

const app = document.getElementById('app') as HTMLElement
const banner = document.getElementById('banner') as HTMLElement

let unbindShortcuts: (() => void) | null = null
const timer = new SessionTimer()

function showBanner(text: string, tone: 'info' | 'error' = 'info') {
  banner.textContent = text
  banner.className = `banner ${tone}`
  banner.hidden = text === ''
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.report.code}: ${err.report.message}`
  return String(err)
}

function annotatorId(): string {
  let id = localStorage.getItem('annotator_id')
  if (!id) {
    id = window.prompt('annotator id?') || 'anonymous'
    localStorage.setItem('annotator_id', id)
  }
  return id
}

// ── annotate view ──

function cardHtml(card: PairCard, position: number, total: number): string {
  const context = (lines: string[]) =>
    lines.map((t) => `<p class="context">${escapeHtml(t)}</p>`).join('')
  const checklist = card.checklist
    .map(
      (item, i) =>
        `<label><input type="checkbox" data-check="${i}" ${item.checked ? 'checked' : ''}/> ${escapeHtml(item.element)}</label>`,
    )
    .join('')
  return `
    <div class="card">
      <div class="meta">${escapeHtml(card.motifId)} · pair ${position}/${total}</div>
      <h2>${escapeHtml(card.description ?? '(no description on file)')}</h2>
      ${context(card.before)}
      <p class="sentence">${escapeHtml(card.sentence)}</p>
      ${context(card.after)}
      <fieldset class="checklist"><legend>elements to identify</legend>${checklist}</fieldset>
      <div class="controls">
        <button data-act="yes" class="${card.label === 'positive' ? 'on' : ''}">Yes (y)</button>
        <button data-act="no" class="${card.label === 'negative' ? 'on' : ''}">No (n)</button>
        <button data-act="flag" class="${card.flagged ? 'on' : ''}">Flag (f)</button>
        <span class="expression" ${card.label === 'positive' ? '' : 'hidden'}>
          <button data-act="simple" class="${card.expression === 'simple' ? 'on' : ''}">simple (1)</button>
          <button data-act="complex" class="${card.expression === 'complex' ? 'on' : ''}">complex (2)</button>
        </span>
        <button data-act="submit" ${card.label === null ? 'disabled' : ''}>Submit (Enter)</button>
        <button data-act="skip">Skip (→)</button>
      </div>
    </div>`
}

async function showAnnotate() {
  const flow = new AnnotateFlow(api, annotatorId(), (event) => {
    switch (event.kind) {
      case 'card':
        app.innerHTML = cardHtml(event.card, event.position, event.total)
        wireCard(flow)
        break
      case 'saved':
        showBanner('', 'info')
        break
      case 'blocked':
        showBanner(event.reason, 'error')
        break
      case 'conflict':
        showBanner(`${event.report.code} — refetched your open pairs`, 'info')
        break
      case 'rejected':
        showBanner(describeError(new ApiError(422, event.report)), 'error')
        break
      case 'drained':
        app.innerHTML = '<p class="done">Nothing left in your assignment. 🎉</p>'
        break
    }
    if (timer.shouldSuggestBreak()) {
      showBanner('You have been annotating for an hour — take a break.', 'info')
      timer.dismiss()
    }
  })

  unbindShortcuts?.()
  unbindShortcuts = bindAnnotateShortcuts(window, {
    yes: () => { flow.choose('positive'); repaint(flow) },
    no: () => { flow.choose('negative'); repaint(flow) },
    flag: () => { flow.toggleFlag(); repaint(flow) },
    simple: () => { flow.chooseExpression('simple'); repaint(flow) },
    complex: () => { flow.chooseExpression('complex'); repaint(flow) },
    submit: () => void flow.submit().catch((e) => showBanner(describeError(e), 'error')),
    skip: () => void flow.skip().catch((e) => showBanner(describeError(e), 'error')),
  })

  try {
    await flow.start()
  } catch (err) {
    showBanner(describeError(err), 'error')
  }
}

function repaint(flow: AnnotateFlow) {
  if (flow.card) {
    app.innerHTML = cardHtml(flow.card, flow.position, flow.total)
    wireCard(flow)
  }
}

function wireCard(flow: AnnotateFlow) {
  app.querySelectorAll('button[data-act]').forEach((button) => {
    button.addEventListener('click', () => {
      const act = (button as HTMLButtonElement).dataset.act
      if (act === 'yes') flow.choose('positive')
      else if (act === 'no') flow.choose('negative')
      else if (act === 'flag') flow.toggleFlag()
      else if (act === 'simple') flow.chooseExpression('simple')
      else if (act === 'complex') flow.chooseExpression('complex')
      else if (act === 'submit') {
        void flow.submit().catch((e) => showBanner(describeError(e), 'error'))
        return
      } else if (act === 'skip') {
        void flow.skip().catch((e) => showBanner(describeError(e), 'error'))
        return
      }
      repaint(flow)
    })
  })
  app.querySelectorAll('input[data-check]').forEach((box) => {
    box.addEventListener('change', () => {
      flow.toggleChecklist(Number((box as HTMLInputElement).dataset.check))
    })
  })
}

// ── adjudicate view ──

async function showAdjudicate() {
  unbindShortcuts?.()
  unbindShortcuts = null
  const resolver = annotatorId()
  const flow = new AdjudicateFlow(api, resolver, (event) => {
    if (event.kind === 'list') {
      if (event.disagreements.length === 0) {
        app.innerHTML = '<p class="done">No open disagreements.</p>'
        return
      }
      app.innerHTML = `<ul class="queue">${event.disagreements
        .map(
          (d, i) =>
            `<li><a href="#" data-open="${i}">${escapeHtml(d.motif_id)} | ${escapeHtml(d.sentence_id)}</a></li>`,
        )
        .join('')}</ul>`
      app.querySelectorAll('a[data-open]').forEach((link) => {
        link.addEventListener('click', (e) => {
          e.preventDefault()
          void flow.open(Number((link as HTMLElement).dataset.open))
        })
      })
    } else if (event.kind === 'card') {
      const { disagreement, context } = event.card
      const records = disagreement.records
        .map(
          (r) =>
            `<div class="side"><b>${escapeHtml(r.annotator_id)}</b>: ${r.label}${r.expression ? ` / ${r.expression}` : ''}</div>`,
        )
        .join('')
      app.innerHTML = `
        <div class="card">
          <div class="meta">${escapeHtml(disagreement.motif_id)} | ${escapeHtml(disagreement.sentence_id)}</div>
          <p class="sentence">${escapeHtml(context?.sentence_text ?? '(sentence unavailable)')}</p>
          <div class="sides">${records}</div>
          <div class="controls">
            <button data-rule="positive">final: Yes</button>
            <button data-rule="negative">final: No</button>
            <button data-exp="simple">simple</button>
            <button data-exp="complex">complex</button>
            <input type="text" id="note" placeholder="note"/>
            <button data-act="submit">Resolve</button>
          </div>
        </div>`
      app.querySelectorAll('button[data-rule]').forEach((b) =>
        b.addEventListener('click', () =>
          flow.rule((b as HTMLElement).dataset.rule as 'positive' | 'negative'),
        ),
      )
      app.querySelectorAll('button[data-exp]').forEach((b) =>
        b.addEventListener('click', () =>
          flow.ruleExpression((b as HTMLElement).dataset.exp as 'simple' | 'complex'),
        ),
      )
      const note = app.querySelector('#note') as HTMLInputElement
      note.addEventListener('input', () => flow.setNote(note.value))
      app.querySelector('button[data-act="submit"]')?.addEventListener('click', () => {
        void flow.submit().catch((e) => showBanner(describeError(e), 'error'))
      })
    } else if (event.kind === 'blocked') {
      showBanner(event.reason, 'error')
    } else if (event.kind === 'resolved') {
      showBanner(`resolved ${event.motifId} | ${event.sentenceId}`, 'info')
    } else if (event.kind === 'stale') {
      showBanner('already resolved elsewhere — list refreshed', 'info')
    } else if (event.kind === 'rejected') {
      showBanner(describeError(new ApiError(422, event.report)), 'error')
    }
  })
  try {
    await flow.refresh()
  } catch (err) {
    showBanner(describeError(err), 'error')
  }
}

// ── dashboard view ──

async function showDashboard() {
  unbindShortcuts?.()
  unbindShortcuts = null
  try {
    const data = await fetchDashboard(api)
    const hint = onboardingHint(data)
    app.innerHTML = `
      <h2>agreement (${data.agreement.double_pairs} double pairs, ${data.disagreementCount} open disagreements)</h2>
      ${hint ? `<p class="hint">${escapeHtml(hint)}</p>` : tableHtml(agreementRows(data.agreement), 'grid')}
      <h2>progress</h2>
      ${listHtml(progressLines(data.progress), 'progress')}
      <h2>thresholds</h2>
      ${listHtml(thresholdLines(data.progress), 'thresholds')}
      <button id="refresh">Refresh</button>`
    document.getElementById('refresh')?.addEventListener('click', () => void showDashboard())
  } catch (err) {
    showBanner(describeError(err), 'error')
  }
}

// ── routing ──

function route() {
  showBanner('')
  const view = location.hash.replace('#', '') || 'annotate'
  if (view === 'adjudicate') void showAdjudicate()
  else if (view === 'dashboard') void showDashboard()
  else void showAnnotate()
}

window.addEventListener('hashchange', route)
route()
