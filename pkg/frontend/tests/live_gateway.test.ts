/**
 * Round-trip against a live gateway: spawns `motifdex serve` on a mock-provider
 * project and drives it through the same flows the browser uses.  Covers the
 * full annotate → disagree → adjudicate → dashboard loop.
 */

import { ChildProcess, spawn } from 'node:child_process'
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join, resolve } from 'node:path'
import { fileURLToPath } from 'node:url'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { AdjudicateFlow } from '../src/adjudicate.js'
import { AnnotateFlow, FlowEvent } from '../src/annotate.js'
import { ApiClient, ApiError } from '../src/api.js'
import { agreementRows, fetchDashboard, progressLines, thresholdLines } from '../src/dashboard.js'
import type { ExpressionValue, LabelValue } from '../src/types.js'

const here = fileURLToPath(new URL('.', import.meta.url))
const repoRoot = resolve(here, '..', '..')
const port = 18700 + Math.floor(Math.random() * 900)
const baseUrl = `http://127.0.0.1:${port}`

const INDEX_CSV = `motif_id,description,theme,conceptual,graph_node_count,page_refs
B3,Viper with human face,B,simple,2,burton:1:14
B3.1,Viper speaks to the king,B,simple,2,
C1,Maiden finds a treasure in the sea,C,complex,4,burton:3:120
`

const SENTENCES: Array<[string, string]> = [
  ['s1', 'The viper hissed at the king.'],
  ['s2', 'The king spoke to the maiden.'],
  ['s3', 'A serpent slid into the sea.'],
  ['s4', 'The maiden found a treasure of jewels.'],
  ['s5', 'A viper with a human face.'],
  ['s6', 'The fish leapt from the sea.'],
]

const QUEUE: Array<[string, string]> = [
  ['B3', 's1'],
  ['B3', 's5'],
  ['C1', 's4'],
  ['B3.1', 's2'],
]

let projectDir: string
let server: ChildProcess | null = null
let serverLog = ''
const api = new ApiClient({ baseUrl })

function writeProject(): string {
  const dir = mkdtempSync(join(tmpdir(), 'motifdex-ui-'))
  writeFileSync(join(dir, 'motifs.csv'), INDEX_CSV)
  writeFileSync(
    join(dir, 'lexicon.tsv'),
    readFileSync(resolve(repoRoot, 'tests', 'fixtures', 'lexicon_toy.tsv')),
  )
  writeFileSync(
    join(dir, 'sentences.jsonl'),
    SENTENCES.map(([sid, text]) =>
      JSON.stringify({ sentence_id: sid, volume_no: 1, page_no: 1, text }),
    ).join('\n') + '\n',
  )
  writeFileSync(
    join(dir, 'queue.jsonl'),
    QUEUE.map(([m, s]) => JSON.stringify({ motif_id: m, sentence_id: s })).join('\n') + '\n',
  )
  writeFileSync(
    join(dir, 'project.json'),
    JSON.stringify({
      project_id: 'ui-roundtrip',
      index_file: 'motifs.csv',
      lexical_resource: 'lexicon.tsv',
      sentences_file: 'sentences.jsonl',
      store_log: 'store.jsonl',
      queue_seed: 'queue.jsonl',
      batch_size: 4,
      double_rate: 0.5,
      providers: {
        embed: { provider_id: 'mock-embed', base_url: 'mock://' },
        pair_score: { provider_id: 'mock-score', base_url: 'mock://' },
        generate: { provider_id: 'mock-gen', base_url: 'mock://' },
      },
      thresholds: { 'mock-embed': 0.5 },
    }),
  )
  return dir
}

async function waitForHealth(): Promise<void> {
  for (let attempt = 0; attempt < 60; attempt++) {
    try {
      const health = await api.health()
      if (health.status === 'ok') return
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500))
  }
  throw new Error(`gateway never came up on ${baseUrl}\n${serverLog}`)
}

/** Label every card the flow serves, choosing by sentence id. */
async function labelAll(
  annotator: string,
  choose: (sentenceId: string) => { label: LabelValue; expression?: ExpressionValue },
): Promise<FlowEvent[]> {
  const events: FlowEvent[] = []
  const flow = new AnnotateFlow(api, annotator, (e) => events.push(e))
  await flow.start()
  while (flow.card) {
    const choice = choose(flow.card.pair.sentence_id)
    flow.choose(choice.label)
    if (choice.expression) flow.chooseExpression(choice.expression)
    await flow.submit()
  }
  return events
}

beforeAll(async () => {
  projectDir = writeProject()
  server = spawn(
    'python3',
    ['-m', 'motifdex.cli', '--config', join(projectDir, 'project.json'), 'serve', '--port', String(port)],
    { cwd: repoRoot, stdio: ['ignore', 'pipe', 'pipe'] },
  )
  server.stdout?.on('data', (chunk) => (serverLog += chunk))
  server.stderr?.on('data', (chunk) => (serverLog += chunk))
  await waitForHealth()
}, 60_000)

afterAll(() => {
  server?.kill()
  server = null
  if (projectDir) rmSync(projectDir, { recursive: true, force: true })
})

describe('live gateway round trip', () => {
  it('labels submitted through the card flow appear in the server state', async () => {
    const events = await labelAll('ann-a', (sentenceId) => {
      if (sentenceId === 's1') return { label: 'positive', expression: 'simple' }
      if (sentenceId === 's5') return { label: 'positive', expression: 'simple' }
      if (sentenceId === 's4') return { label: 'positive', expression: 'complex' }
      return { label: 'negative' } // s2
    })
    expect(events.filter((e) => e.kind === 'saved')).toHaveLength(4)
    expect(events.at(-1)).toEqual({ kind: 'drained' })

    const { records } = await api.labels({ annotator_id: 'ann-a' })
    expect(records).toHaveLength(4)
    const byId = new Map(records.map((r) => [r.sentence_id, r]))
    expect(byId.get('s1')).toMatchObject({ label: 'positive', expression: 'simple' })
    expect(byId.get('s4')).toMatchObject({ label: 'positive', expression: 'complex' })
    expect(byId.get('s2')).toMatchObject({ label: 'negative', expression: null })
  }, 20_000)

  it('blocks a positive without expression client-side; the server rejects it too', async () => {
    const events: FlowEvent[] = []
    const flow = new AnnotateFlow(api, 'ann-b', (e) => events.push(e))
    await flow.start()
    // the fresh queue is empty, so the whole batch is drawn from ann-a's
    // assignments as double-annotation work: all four pairs, in batch order
    expect(flow.total).toBe(4)
    expect(flow.card?.pair).toEqual({ motif_id: 'B3', sentence_id: 's1' })

    flow.choose('positive')
    await flow.submit()
    expect(events.at(-1)).toMatchObject({ kind: 'blocked' })
    const posted = await api.labels({ annotator_id: 'ann-b' })
    expect(posted.records).toHaveLength(0) // nothing left the client

    // bypassing the client validation gets the same rule server-side (422)
    const pair = flow.card!.pair
    const err = await api
      .postLabel({
        motif_id: pair.motif_id,
        sentence_id: pair.sentence_id,
        annotator_id: 'ann-b',
        label: 'positive',
      })
      .catch((e) => e)
    expect(err).toBeInstanceOf(ApiError)
    expect(err.status).toBe(422)
    expect(err.code).toBe('MISSING_EXPRESSION')
  }, 20_000)

  it('resume shows exactly the unlabeled remainder after an interruption', async () => {
    // label only the s1 pair (disagreeing with ann-a), then "lose the session"
    const first = new AnnotateFlow(api, 'ann-b')
    await first.start()
    while (first.card && first.card.pair.sentence_id !== 's1') await first.skip()
    first.choose('negative')
    await first.submit()

    const resumed = new AnnotateFlow(api, 'ann-b')
    await resumed.start()
    expect(resumed.total).toBe(3)
    expect(resumed.card?.pair).toEqual({ motif_id: 'B3', sentence_id: 's5' })

    // finish the assignment, agreeing with ann-a on every remaining pair
    while (resumed.card) {
      const sid = resumed.card.pair.sentence_id
      if (sid === 's5') {
        resumed.choose('positive')
        resumed.chooseExpression('simple')
      } else if (sid === 's4') {
        resumed.choose('positive')
        resumed.chooseExpression('complex')
      } else {
        resumed.choose('negative') // s2
      }
      await resumed.submit()
    }
    expect((await api.remaining('ann-b')).pairs).toEqual([])
  }, 20_000)

  it('adjudicating the conflict clears the disagreement list', async () => {
    const open = await api.disagreements()
    expect(open.disagreements).toHaveLength(1)
    expect(open.disagreements[0]).toMatchObject({ motif_id: 'B3', sentence_id: 's1' })
    expect(open.disagreements[0].records.map((r) => r.label).sort()).toEqual([
      'negative',
      'positive',
    ])

    const flow = new AdjudicateFlow(api, 'lead')
    await flow.refresh()
    expect(flow.list).toHaveLength(1)
    await flow.open(0)
    // sentence text comes back in its normalized (folded) form
    expect(flow.card?.context?.sentence_text).toBe('the viper hissed at the king.')
    flow.rule('positive')
    flow.ruleExpression('simple')
    flow.setNote('viper reference is explicit')
    await flow.submit()
    expect(flow.list).toEqual([])
    expect((await api.disagreements()).disagreements).toEqual([])

    // a second ruling on the same pair is refused: the server is authoritative
    const err = await api
      .postAdjudication({
        motif_id: 'B3',
        sentence_id: 's1',
        final_label: 'negative',
        resolver_id: 'second-lead',
      })
      .catch((e) => e)
    expect(err).toBeInstanceOf(ApiError)
    expect(err.status).toBe(409)
    expect(err.code).toBe('NOT_IN_QUEUE')
  }, 20_000)

  it('dashboard renders the live payload numbers verbatim', async () => {
    const data = await fetchDashboard(api)
    expect(data.agreement.double_pairs).toBe(4)
    expect(data.disagreementCount).toBe(0)

    const cell = (conceptual: string, expression: string) =>
      data.agreement.cells.find(
        (c) => c.conceptual === conceptual && c.expression === expression,
      )!
    // three agreeing doubles and one conflict: 0.75 observed vs 0.5 chance
    expect(cell('overall', 'overall')).toMatchObject({
      kappa: 0.5,
      degenerate: false,
      pairs: 4,
      motifs: 3,
    })
    // the lone complex motif (C1) agrees with itself: constant raters
    expect(cell('complex', 'complex')).toMatchObject({
      kappa: 1,
      degenerate: true,
      pairs: 1,
    })
    expect(cell('simple', 'simple').pairs).toBe(3)
    expect(cell('simple', 'simple').kappa).toBeCloseTo(0.4, 12)
    expect(cell('simple', 'complex')).toMatchObject({ kappa: null, pairs: 0 })

    const grid = agreementRows(data.agreement)
    expect(grid[0]).toEqual(['conceptual \\ expression', 'simple', 'complex', 'overall'])
    expect(grid[2][2]).toBe('1*') // degenerate cells are marked, not hidden
    expect(grid[3][3]).toBe('0.5')

    const accounting = data.progress.accounting
    expect(accounting).toMatchObject({
      pairs: 4,
      unique_sentences: 4,
      records: 8,
      double_annotated: 4,
      disagreements_open: 0,
      adjudications: 1,
      queue_depth: 0,
      positives: 3, // adjudicated s1 + agreeing s5 + agreeing s4
      negatives: 1, // agreeing s2
    })
    const lines = progressLines(data.progress)
    expect(lines).toContain('labeled pairs: 4')
    expect(lines).toContain('records: 8')
    expect(lines).toContain('gold positives: 3')
    expect(lines).toContain('adjudications: 1')
    expect(lines).toContain(`project: ${data.progress.project_id}`)
  }, 20_000)

  it('recalibration is echoed back with local provenance', async () => {
    expect(thresholdLines(await api.progress())).toContain(
      'mock-embed: 0.5 (locally-calibrated)',
    )
    const result = await api.recalibrate('mock-embed', [0.75], [0.25])
    expect(result).toEqual({
      provider_id: 'mock-embed',
      threshold: 0.5,
      provenance: 'locally-calibrated',
    })
    const after = await api.progress()
    expect(thresholdLines(after)).toContain('mock-embed: 0.5 (locally-calibrated)')
    expect(after.thresholds['mock-embed'].provenance).toBe('locally-calibrated')
  }, 20_000)
})
