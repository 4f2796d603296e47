// Thin fetch client for the tagging service. Mutations report structured
// outcomes instead of throwing, so the board can revert cards and show the
// server's own message.

import type {
  AssignRequest,
  AssignResponse,
  CommitResponse,
  FileCandidate,
  ManifestDoc,
  VersionConflict,
} from './types.js';

export type MutationResult<T> =
  | { ok: true; data: T }
  | { ok: false; status: number; message: string; conflict?: VersionConflict };

async function parseError(r: Response): Promise<{ message: string; conflict?: VersionConflict }> {
  try {
    const body = await r.json();
    const detail = body?.detail;
    if (detail && typeof detail === 'object' && 'current_version' in detail) {
      return { message: 'the board changed on the server', conflict: detail as VersionConflict };
    }
    if (typeof detail === 'string') return { message: detail };
    return { message: JSON.stringify(body) };
  } catch {
    return { message: `HTTP ${r.status}` };
  }
}

export class ApiClient {
  constructor(private readonly base: string = '') {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async files(): Promise<FileCandidate[]> {
    const r = await fetch(this.url('/api/files'));
    if (!r.ok) throw new Error(`GET /api/files failed: ${r.status}`);
    return r.json();
  }

  async manifest(): Promise<ManifestDoc> {
    const r = await fetch(this.url('/api/manifest'));
    if (!r.ok) throw new Error(`GET /api/manifest failed: ${r.status}`);
    return r.json();
  }

  async assign(body: AssignRequest): Promise<MutationResult<AssignResponse>> {
    const r = await fetch(this.url('/api/assign'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (r.ok) return { ok: true, data: await r.json() };
    const err = await parseError(r);
    return { ok: false, status: r.status, ...err };
  }

  async commit(): Promise<MutationResult<CommitResponse>> {
    const r = await fetch(this.url('/api/commit'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({}),
    });
    if (r.ok) return { ok: true, data: await r.json() };
    const err = await parseError(r);
    return { ok: false, status: r.status, ...err };
  }
}
