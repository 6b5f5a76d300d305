/**
 * Pure DOM builders for the conduct views.
 *
 * Every function maps server payloads to elements; none of them inspects
 * form state or issues requests.  Decision strings are rendered verbatim
 * from the server reply (exposed via data-decision) so the displayed
 * history can be diffed against the event log.
 */

import type {
    CohortEvent,
    CohortReply,
    Decision,
    SelectionBlock,
    SelectionView,
    TrialView,
} from './api.js';

const DECISION_LABEL: Record<Decision, string> = {
    escalate: 'Escalate to',
    retain: 'Retain at',
    deescalate: 'De-escalate to',
};

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

/** Human text for a cohort reply; the trial may have ended on this cohort. */
export function decisionText(reply: CohortReply): string {
    if (reply.status === 'stopped_all_eliminated') {
        return 'Trial stopped: lowest dose eliminated';
    }
    if (reply.status === 'completed') {
        return 'Trial complete: all cohorts enrolled';
    }
    return `${DECISION_LABEL[reply.decision]} dose ${reply.next_dose}`;
}

export function renderBanner(reply: CohortReply): HTMLElement {
    const banner = el('div', `banner banner-${reply.status}`);
    banner.dataset.decision = reply.decision;
    banner.dataset.status = reply.status;
    banner.appendChild(el('strong', undefined, decisionText(reply)));
    if (reply.eliminations.length > 0 && reply.status === 'running') {
        banner.appendChild(
            el('span', 'eliminated-note',
               ` Doses eliminated: ${reply.eliminations.join(', ')}`),
        );
    }
    return banner;
}

export function renderError(message: string, kind: 'conflict' | 'network' | 'validation'): HTMLElement {
    const banner = el('div', `banner banner-error banner-${kind}`);
    banner.dataset.errorKind = kind;
    banner.appendChild(el('strong', undefined, message));
    return banner;
}

/** Dose ladder: one row per dose with cumulative counts and flags. */
export function renderLadder(view: TrialView): HTMLElement {
    const table = el('table', 'ladder');
    table.dataset.testid = 'ladder';
    const head = table.createTHead().insertRow();
    for (const h of ['Dose', 'Level', 'Patients', 'DLTs', 'Status']) {
        head.appendChild(el('th', undefined, h));
    }
    const body = table.createTBody();
    const { state } = view;
    view.doses.forEach((dose, i) => {
        const level = i + 1;
        const row = body.insertRow();
        row.dataset.dose = String(level);
        if (state.status === 'running' && level === state.current_dose) {
            row.classList.add('current');
        }
        if (state.eliminated[i]) row.classList.add('eliminated');
        row.insertCell().textContent = String(dose);
        row.insertCell().textContent =
            level === view.ref_index ? `${level} (reference)` : String(level);
        row.insertCell().textContent = String(state.n[i]);
        row.insertCell().textContent = String(state.m[i]);
        row.insertCell().textContent = state.eliminated[i]
            ? 'eliminated'
            : state.status === 'running' && level === state.current_dose
              ? 'current'
              : '';
    });
    return table;
}

/** Escalation rule table derived from the design's decision thresholds. */
export function renderBoundaries(view: TrialView): HTMLElement {
    const design = view.design;
    const wrap = el('div', 'boundaries');
    wrap.dataset.testid = 'boundaries';
    wrap.appendChild(
        el('p', 'thresholds',
           `Escalate while DLT rate ≤ ${design.lambda_e.toFixed(4)}; ` +
           `de-escalate at ≥ ${design.lambda_d.toFixed(4)}`),
    );
    const table = el('table');
    const head = table.createTHead().insertRow();
    for (const h of ['Patients treated', 'Escalate if DLTs ≤', 'De-escalate if DLTs ≥']) {
        head.appendChild(el('th', undefined, h));
    }
    const body = table.createTBody();
    const step = design.cohort_size;
    const maxN = design.cohort_size * design.n_cohorts;
    for (let n = step; n <= maxN; n += step) {
        const row = body.insertRow();
        row.insertCell().textContent = String(n);
        row.insertCell().textContent = String(Math.floor(n * design.lambda_e));
        row.insertCell().textContent = String(Math.ceil(n * design.lambda_d));
    }
    wrap.appendChild(table);
    return wrap;
}

/** Decision history, oldest first; strings come straight off the event log. */
export function renderHistory(events: CohortEvent[]): HTMLElement {
    const list = el('ol', 'history');
    list.dataset.testid = 'history';
    for (const ev of events) {
        const item = el('li');
        item.dataset.decision = ev.decision;
        item.dataset.cohort = String(ev.cohort_index);
        let text =
            `Cohort ${ev.cohort_index}: dose ${ev.dose}, ` +
            `${ev.dlt}/${ev.n} DLTs → ${ev.decision}`;
        if (ev.eliminations.length > 0) {
            text += ` (eliminated ${ev.eliminations.join(', ')})`;
        }
        item.textContent = text;
        list.appendChild(item);
    }
    return list;
}

function formatEstimate(value: number | null): string {
    return value === null ? '—' : value.toFixed(3);
}

function formatDistance(value: number | null, phi: number): string {
    return value === null ? '—' : Math.abs(value - phi).toFixed(3);
}

/** Side-by-side estimates plus the MTD card; rows sorted by dose ascending. */
export function renderSelection(view: SelectionView, doses: number[]): HTMLElement {
    const wrap = el('div', 'selection');
    wrap.dataset.testid = 'selection';

    const card = el('div', 'mtd-card');
    card.dataset.mtd = view.mtd === null ? 'none' : String(view.mtd);
    if (view.mtd === null) {
        card.appendChild(el('strong', undefined, 'No MTD identified'));
    } else {
        card.appendChild(
            el('strong', undefined,
               `MTD: dose ${view.mtd} (${doses[view.mtd - 1]})`),
        );
    }
    wrap.appendChild(card);

    const blocks: [string, SelectionBlock | undefined][] = [
        ['pava', view.pava],
        ['drm', view.drm],
    ];
    const available = blocks.filter((b): b is [string, SelectionBlock] => b[1] !== undefined);

    const table = el('table', 'estimates');
    const head = table.createTHead().insertRow();
    head.appendChild(el('th', undefined, 'Dose'));
    for (const [name, block] of available) {
        const label = block.link ? `${name} (${block.link})` : name;
        head.appendChild(el('th', undefined, `${label} estimate`));
        head.appendChild(el('th', undefined, `|estimate − ${view.phi}|`));
    }
    const body = table.createTBody();
    doses.forEach((dose, i) => {
        const level = i + 1;
        const row = body.insertRow();
        row.dataset.dose = String(level);
        row.insertCell().textContent = `${level} (${dose})`;
        for (const [name, block] of available) {
            const estimate = block.estimates[i];
            const cell = row.insertCell();
            cell.textContent = formatEstimate(estimate);
            cell.dataset.method = name;
            if (block.mtd === level) cell.classList.add('selected');
            row.insertCell().textContent = formatDistance(estimate, view.phi);
        }
    });
    wrap.appendChild(table);
    return wrap;
}
