import { describe, expect, it } from 'vitest';

import {
  CANONICAL_TAGS,
  UNSORTED,
  buildBoard,
  commitPreview,
  destinationPath,
  planBulkDrop,
  planDrop,
} from '../src/board.js';
import { FakeServer } from './fakeserver.js';

import expectedManifest from './fixtures/expected-manifest.json';
import expectedDestinations from './fixtures/expected-destinations.json';

function serverWithAssignments() {
  const server = new FakeServer('/data/inbox', [
    'scan_a.nii.gz',
    'scan_b.nii.gz',
    'scan_c.nii.gz',
    'scan_d.nii.gz',
  ]);
  server.assign({ file: 'scan_a.nii.gz', subject: 'sub-01', tag: 't1c' });
  server.assign({ file: 'scan_b.nii.gz', subject: 'sub-01', tag: 't2w' });
  return server;
}

describe('buildBoard', () => {
  it('places assigned cards in their tag columns and the rest in unsorted', () => {
    const server = serverWithAssignments();
    const board = buildBoard(server.files(), server.manifestDoc());
    expect(board.columns).toEqual([UNSORTED, ...CANONICAL_TAGS]);
    const byName = Object.fromEntries(board.cards.map((c) => [c.file.name, c]));
    expect(byName['scan_a.nii.gz'].column).toBe('t1c');
    expect(byName['scan_a.nii.gz'].subject).toBe('sub-01');
    expect(byName['scan_a.nii.gz'].status).toBe('pending');
    expect(byName['scan_c.nii.gz'].column).toBe(UNSORTED);
    expect(byName['scan_c.nii.gz'].status).toBe('unsorted');
  });

  it('adds a column for non-canonical tags found in the manifest', () => {
    const server = serverWithAssignments();
    server.assign({ file: 'scan_c.nii.gz', subject: 'sub-02', tag: 'swi' });
    const board = buildBoard(server.files(), server.manifestDoc());
    expect(board.columns).toContain('swi');
  });

  it('reconstructs the identical board from the same API documents', () => {
    const server = serverWithAssignments();
    const a = buildBoard(server.files(), server.manifestDoc());
    const b = buildBoard(server.files(), server.manifestDoc());
    expect(b).toEqual(a); // page reload == rebuild from GET /api/files + /api/manifest
  });

  it('carries the manifest version', () => {
    const server = serverWithAssignments();
    const board = buildBoard(server.files(), server.manifestDoc());
    expect(board.version).toBe(server.version);
  });
});

describe('planDrop', () => {
  function board() {
    const server = serverWithAssignments();
    return buildBoard(server.files(), server.manifestDoc());
  }

  it('maps a tag drop to one assign request', () => {
    const plan = planDrop(board(), 'scan_c.nii.gz', 't1n', 'sub-02');
    expect(plan.kind).toBe('assign');
    expect(plan.body).toEqual({
      file: 'scan_c.nii.gz',
      subject: 'sub-02',
      tag: 't1n',
      expected_version: 2,
    });
  });

  it('maps an unsorted drop to an unassign request', () => {
    const plan = planDrop(board(), 'scan_a.nii.gz', UNSORTED, null);
    expect(plan.kind).toBe('unassign');
    expect(plan.body?.tag).toBeNull();
  });

  it('requires a subject before tagging', () => {
    const plan = planDrop(board(), 'scan_c.nii.gz', 't1n', null);
    expect(plan.kind).toBe('invalid');
    expect(plan.message).toMatch(/subject/);
  });

  it('rejects malformed subjects', () => {
    expect(planDrop(board(), 'scan_c.nii.gz', 't1n', 'bad subject!').kind).toBe('invalid');
  });

  it('is a noop when dropped on the current column', () => {
    expect(planDrop(board(), 'scan_a.nii.gz', 't1c', 'sub-01').kind).toBe('noop');
  });

  it('bulk drops produce one plan per card with per-card subjects', () => {
    const subjects: Record<string, string> = {
      'scan_c.nii.gz': 'sub-03',
      'scan_d.nii.gz': 'sub-04',
    };
    const plans = planBulkDrop(
      board(),
      ['scan_c.nii.gz', 'scan_d.nii.gz'],
      't2f',
      (name) => subjects[name],
    );
    expect(plans).toHaveLength(2);
    expect(plans.every((p) => p.kind === 'assign')).toBe(true);
    expect(plans.map((p) => p.body?.subject)).toEqual(['sub-03', 'sub-04']);
  });
});

describe('commit preview', () => {
  it('matches the naming scheme', () => {
    expect(destinationPath('sub-01', 't1c')).toBe('sub-01/sub-01-t1c.nii.gz');
  });

  it('lists exactly the pending entries with exact destinations', () => {
    const server = serverWithAssignments();
    const rows = commitPreview(server.manifestDoc());
    expect(rows).toEqual([
      { input_path: '/data/inbox/scan_a.nii.gz', destination: 'sub-01/sub-01-t1c.nii.gz' },
      { input_path: '/data/inbox/scan_b.nii.gz', destination: 'sub-01/sub-01-t2w.nii.gz' },
    ]);
  });

  it('matches the destinations the backend computes (frozen fixture)', () => {
    const server = new FakeServer('/data/inbox', [
      'scan_a.nii.gz',
      'scan_b.nii.gz',
      'scan_c.nii.gz',
    ]);
    server.assign({ file: 'scan_a.nii.gz', subject: 'sub-01', tag: 't1c' });
    server.assign({ file: 'scan_b.nii.gz', subject: 'sub-01', tag: 't2w' });
    server.assign({ file: 'scan_c.nii.gz', subject: 'sub-02', tag: 't1n' });
    const rows = commitPreview(server.manifestDoc());
    expect(rows).toEqual(expectedDestinations);
  });

  it('skips committed entries', () => {
    const server = serverWithAssignments();
    server.commit();
    expect(commitPreview(server.manifestDoc())).toEqual([]);
  });
});

describe('manifest parity with the headless flow', () => {
  it('drag-assign order produces the byte-equivalent manifest (modulo version)', () => {
    const server = new FakeServer('/data/inbox', [
      'scan_a.nii.gz',
      'scan_b.nii.gz',
      'scan_c.nii.gz',
    ]);
    server.assign({ file: 'scan_a.nii.gz', subject: 'sub-01', tag: 't1c' });
    server.assign({ file: 'scan_b.nii.gz', subject: 'sub-01', tag: 't2w' });
    server.assign({ file: 'scan_c.nii.gz', subject: 'sub-02', tag: 't1n' });
    const doc = server.manifestDoc() as Record<string, unknown>;
    const expected = { ...(expectedManifest as Record<string, unknown>) };
    delete doc['version'];
    delete expected['version'];
    expect(doc).toEqual(expected);
  });
});
