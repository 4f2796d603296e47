// Pure board logic: everything here is a function of the two API documents
// (file scan + manifest), so a page reload rebuilds the identical board.
export const CANONICAL_TAGS = ['t1n', 't1c', 't2w', 't2f'];
export const UNSORTED = 'unsorted';
export function buildBoard(files, manifest) {
    const byPath = new Map();
    for (const e of manifest.entries)
        byPath.set(e.input_path, e);
    const extra = new Set();
    for (const e of manifest.entries) {
        if (!CANONICAL_TAGS.includes(e.tag))
            extra.add(e.tag);
    }
    const columns = [UNSORTED, ...CANONICAL_TAGS, ...[...extra].sort()];
    const cards = files.map((file) => {
        const entry = byPath.get(file.path);
        if (entry) {
            return {
                file,
                column: entry.tag,
                subject: entry.subject_id,
                status: entry.status,
                draggable: entry.status !== 'committed',
            };
        }
        return {
            file,
            column: UNSORTED,
            subject: null,
            status: 'unsorted',
            draggable: file.kind === 'nifti',
        };
    });
    return { columns, cards, version: manifest.version };
}
export function cardByName(board, name) {
    return board.cards.find((c) => c.file.name === name);
}
export const SUBJECT_RE = /^[A-Za-z0-9-]+$/;
export const TAG_RE = /^[a-z0-9_]+$/;
/** Translate one card drop into exactly one API mutation (or a rejection). */
export function planDrop(board, fileName, targetColumn, subject) {
    const card = cardByName(board, fileName);
    if (!card)
        return { kind: 'invalid', message: `unknown card ${fileName}` };
    if (!card.draggable) {
        return { kind: 'invalid', message: `${fileName} cannot be moved` };
    }
    if (targetColumn === card.column)
        return { kind: 'noop' };
    if (targetColumn === UNSORTED) {
        return {
            kind: 'unassign',
            body: { file: fileName, tag: null, expected_version: board.version },
        };
    }
    if (!TAG_RE.test(targetColumn)) {
        return { kind: 'invalid', message: `invalid tag ${targetColumn}` };
    }
    if (!subject || !SUBJECT_RE.test(subject)) {
        return {
            kind: 'invalid',
            message: 'a subject id (letters, digits, dashes) is required before tagging',
        };
    }
    return {
        kind: 'assign',
        body: {
            file: fileName,
            subject,
            tag: targetColumn,
            expected_version: board.version,
        },
    };
}
/** Bulk mode: one plan per selected card, each with its own subject field. */
export function planBulkDrop(board, fileNames, targetColumn, subjectFor) {
    return fileNames.map((name) => planDrop(board, name, targetColumn, subjectFor(name)));
}
export function destinationPath(subject, tag) {
    return `${subject}/${subject}-${tag}.nii.gz`;
}
/** Exact destination paths for every pending entry, shown before commit. */
export function commitPreview(manifest) {
    return manifest.entries
        .filter((e) => e.status === 'pending')
        .map((e) => ({
        input_path: e.input_path,
        destination: destinationPath(e.subject_id, e.tag),
    }));
}
