// Board controller: the single place where user gestures become API calls.
// Every mutation corresponds to exactly one request; after a batch the board
// is rebuilt from the server documents (the UI holds no authoritative state).
import { buildBoard, planBulkDrop } from './board.js';
export class BoardController {
    constructor(api) {
        this.api = api;
        this.state = { columns: [], cards: [], version: 0 };
        this.manifest = null;
    }
    async refresh() {
        const [files, manifest] = await Promise.all([this.api.files(), this.api.manifest()]);
        this.manifest = manifest;
        this.state = buildBoard(files, manifest);
        return this.state;
    }
    /** Drop one or many cards onto a column; partial failures leave successes. */
    async drop(fileNames, column, subject) {
        const subjectFor = typeof subject === 'function' ? subject : () => subject;
        const plans = planBulkDrop(this.state, fileNames, column, subjectFor);
        const notices = [];
        let applied = 0;
        let conflicted = false;
        for (const plan of plans) {
            if (plan.kind === 'noop')
                continue;
            if (plan.kind === 'invalid') {
                notices.push({ level: 'error', message: plan.message ?? 'invalid drop' });
                continue;
            }
            const result = await this.api.assign({
                file: plan.body.file,
                subject: plan.body.subject,
                tag: plan.body.tag,
                // send the freshest known version: our own accepted assigns move it
                expected_version: this.state.version,
            });
            if (result.ok) {
                applied += 1;
                this.state = { ...this.state, version: result.data.version };
            }
            else if (result.conflict) {
                notices.push({
                    level: 'error',
                    message: 'board changed on the server; refreshed - please retry the drop',
                });
                conflicted = true;
                break;
            }
            else {
                notices.push({ level: 'error', message: result.message });
            }
        }
        await this.refresh();
        return { applied, notices, conflicted };
    }
    async commit() {
        const result = await this.api.commit();
        await this.refresh();
        if (result.ok)
            return { response: result.data, notices: [] };
        return { response: null, notices: [{ level: 'error', message: result.message }] };
    }
}
