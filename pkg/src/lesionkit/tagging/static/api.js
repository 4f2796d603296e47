// Thin fetch client for the tagging service. Mutations report structured
// outcomes instead of throwing, so the board can revert cards and show the
// server's own message.
async function parseError(r) {
    try {
        const body = await r.json();
        const detail = body?.detail;
        if (detail && typeof detail === 'object' && 'current_version' in detail) {
            return { message: 'the board changed on the server', conflict: detail };
        }
        if (typeof detail === 'string')
            return { message: detail };
        return { message: JSON.stringify(body) };
    }
    catch {
        return { message: `HTTP ${r.status}` };
    }
}
export class ApiClient {
    constructor(base = '') {
        this.base = base;
    }
    url(path) {
        return `${this.base}${path}`;
    }
    async files() {
        const r = await fetch(this.url('/api/files'));
        if (!r.ok)
            throw new Error(`GET /api/files failed: ${r.status}`);
        return r.json();
    }
    async manifest() {
        const r = await fetch(this.url('/api/manifest'));
        if (!r.ok)
            throw new Error(`GET /api/manifest failed: ${r.status}`);
        return r.json();
    }
    async assign(body) {
        const r = await fetch(this.url('/api/assign'), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
        });
        if (r.ok)
            return { ok: true, data: await r.json() };
        const err = await parseError(r);
        return { ok: false, status: r.status, ...err };
    }
    async commit() {
        const r = await fetch(this.url('/api/commit'), {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({}),
        });
        if (r.ok)
            return { ok: true, data: await r.json() };
        const err = await parseError(r);
        return { ok: false, status: r.status, ...err };
    }
}
