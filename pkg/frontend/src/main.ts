// DOM layer: renders the board, wires drag-and-drop/multi-select/commit.
// All state transitions run through BoardController; this file only paints.

import { ApiClient } from './api.js';
import { BoardState, Card, UNSORTED, cardByName, commitPreview } from './board.js';
import { BoardController, Notice } from './flow.js';

const api = new ApiClient('');
const controller = new BoardController(api);

const selected = new Set<string>();
let lastSubject = '';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function toast(notice: Notice): void {
  const host = document.getElementById('toasts')!;
  const node = el('div', `toast toast-${notice.level}`, notice.message);
  host.appendChild(node);
  setTimeout(() => node.remove(), 6000);
}

function subjectFor(card: Card): string | null {
  const input = document.querySelector<HTMLInputElement>(
    `[data-subject-for="${CSS.escape(card.file.name)}"]`,
  );
  const value = input?.value.trim() || card.subject || lastSubject;
  return value || null;
}

function renderCard(card: Card): HTMLElement {
  const node = el('div', `card status-${card.status}`);
  node.draggable = card.draggable;
  node.dataset.file = card.file.name;

  const title = el('div', 'card-title', card.file.name);
  if (selected.has(card.file.name)) node.classList.add('selected');
  node.appendChild(title);

  if (card.file.kind === 'nifti') {
    const meta = el(
      'div',
      'card-meta',
      `${card.file.dims?.join('x') ?? '?'} @ ${card.file.spacing?.map((s) => s.toFixed(1)).join('/') ?? '?'} mm`,
    );
    node.appendChild(meta);
    if (card.file.preview_url) {
      const img = el('img', 'card-preview') as HTMLImageElement;
      img.loading = 'lazy'; // inboxes may hold hundreds of volumes
      img.src = card.file.preview_url;
      img.alt = `middle slice of ${card.file.name}`;
      node.appendChild(img);
    }
    const subject = el('input', 'card-subject') as HTMLInputElement;
    subject.placeholder = 'subject id';
    subject.value = card.subject ?? '';
    subject.dataset.subjectFor = card.file.name;
    subject.addEventListener('change', () => {
      lastSubject = subject.value.trim();
    });
    node.appendChild(subject);
  } else {
    node.appendChild(el('div', 'card-meta unclassifiable', card.file.reason ?? 'not a NIfTI file'));
  }

  const badge = el('span', 'badge', card.status);
  node.appendChild(badge);

  node.addEventListener('click', (ev) => {
    if (!(ev.target instanceof HTMLInputElement)) {
      if (selected.has(card.file.name)) selected.delete(card.file.name);
      else selected.add(card.file.name);
      node.classList.toggle('selected');
    }
  });
  node.addEventListener('dragstart', (ev) => {
    selected.add(card.file.name);
    const names = [...selected];
    ev.dataTransfer?.setData('application/json', JSON.stringify(names));
  });
  return node;
}

function renderBoard(state: BoardState): void {
  const root = document.getElementById('board')!;
  root.innerHTML = '';
  for (const column of state.columns) {
    const section = el('section', 'column');
    section.dataset.column = column;
    section.appendChild(el('h2', 'column-title', column));
    const body = el('div', 'column-body');
    for (const card of state.cards.filter((c) => c.column === column)) {
      body.appendChild(renderCard(card));
    }
    section.appendChild(body);
    section.addEventListener('dragover', (ev) => ev.preventDefault());
    section.addEventListener('drop', (ev) => {
      ev.preventDefault();
      const raw = ev.dataTransfer?.getData('application/json');
      if (!raw) return;
      void handleDrop(JSON.parse(raw) as string[], column);
    });
    root.appendChild(section);
  }
  const version = document.getElementById('version')!;
  version.textContent = `manifest v${state.version}`;
}

async function handleDrop(names: string[], column: string): Promise<void> {
  const subjectOf = (name: string): string | null => {
    if (column === UNSORTED) return null;
    const card = cardByName(controller.state, name);
    return card ? subjectFor(card) : null;
  };
  const outcome = await controller.drop(names, column, subjectOf);
  outcome.notices.forEach(toast);
  if (outcome.applied > 0) {
    toast({ level: 'info', message: `${outcome.applied} file(s) updated` });
  }
  selected.clear();
  renderBoard(controller.state);
}

function openCommitDialog(): void {
  if (!controller.manifest) return;
  const rows = commitPreview(controller.manifest);
  const dialog = document.getElementById('commit-dialog') as HTMLDialogElement;
  const list = document.getElementById('commit-preview')!;
  list.innerHTML = '';
  if (rows.length === 0) {
    list.appendChild(el('li', '', 'nothing pending'));
  }
  for (const row of rows) {
    list.appendChild(el('li', '', `${row.input_path} → ${row.destination}`));
  }
  dialog.showModal();
}

async function runCommit(): Promise<void> {
  const { response, notices } = await controller.commit();
  notices.forEach(toast);
  if (response) {
    const failed = response.statuses.filter((s) => s.status.startsWith('failed'));
    toast({
      level: failed.length ? 'error' : 'info',
      message: failed.length
        ? `${failed.length} file(s) failed: ${failed.map((f) => f.status).join('; ')}`
        : 'all pending files committed',
    });
  }
  (document.getElementById('commit-dialog') as HTMLDialogElement).close();
  renderBoard(controller.state);
}

async function start(): Promise<void> {
  await controller.refresh();
  renderBoard(controller.state);
  document.getElementById('commit-button')!.addEventListener('click', openCommitDialog);
  document.getElementById('commit-confirm')!.addEventListener('click', () => void runCommit());
  document.getElementById('commit-cancel')!.addEventListener('click', () => {
    (document.getElementById('commit-dialog') as HTMLDialogElement).close();
  });
  document.getElementById('refresh-button')!.addEventListener('click', async () => {
    await controller.refresh();
    renderBoard(controller.state);
  });
}

void start();
