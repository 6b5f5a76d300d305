/**
 * View-layer unit tests on synthetic server payloads: banner wording,
 * ladder flags, selection table ordering and the empty-selection state.
 */

import { beforeEach, describe, expect, it, vi } from 'vitest';

import type { CohortReply, SelectionView, TrialView } from '../src/api.js';
import { ConductApi } from '../src/api.js';
import { ConductApp } from '../src/app.js';
import {
    decisionText,
    renderBanner,
    renderLadder,
    renderSelection,
} from '../src/render.js';

function reply(overrides: Partial<CohortReply>): CohortReply {
    return {
        schema_version: 1,
        trial_id: 't',
        decision: 'escalate',
        next_dose: 2,
        eliminations: [],
        status: 'running',
        state: {
            schema_version: 1,
            n_doses: 2,
            n: [3, 0],
            m: [0, 0],
            current_dose: 2,
            eliminated: [false, false],
            status: 'running',
            events: [],
        },
        ...overrides,
    };
}

describe('decision banner wording', () => {
    it('escalation names the next dose', () => {
        expect(decisionText(reply({}))).toBe('Escalate to dose 2');
    });

    it('retain stays on the current dose', () => {
        expect(decisionText(reply({ decision: 'retain', next_dose: 3 })))
            .toBe('Retain at dose 3');
    });

    it('de-escalation names the next dose', () => {
        expect(decisionText(reply({ decision: 'deescalate', next_dose: 1 })))
            .toBe('De-escalate to dose 1');
    });

    it('stopping on a fully eliminated ladder says so', () => {
        const r = reply({
            decision: 'deescalate',
            status: 'stopped_all_eliminated',
            eliminations: [1, 2],
        });
        expect(decisionText(r)).toBe('Trial stopped: lowest dose eliminated');
        const banner = renderBanner(r);
        expect(banner.dataset.decision).toBe('deescalate');
        expect(banner.dataset.status).toBe('stopped_all_eliminated');
    });

    it('completion is reported as such', () => {
        expect(decisionText(reply({ status: 'completed' })))
            .toBe('Trial complete: all cohorts enrolled');
    });

    it('mid-trial eliminations are listed', () => {
        const banner = renderBanner(
            reply({ decision: 'deescalate', next_dose: 1, eliminations: [2] }),
        );
        expect(banner.textContent).toContain('Doses eliminated: 2');
    });
});

function trialView(): TrialView {
    return {
        schema_version: 1,
        trial_id: 't',
        doses: [10, 20, 30],
        ref_index: 2,
        design: {
            phi: 0.3,
            phi1: 0.18,
            phi2: 0.42,
            cohort_size: 3,
            n_cohorts: 12,
            elim_threshold: 0.95,
            elim_min_n: 3,
            lambda_e: 0.2365,
            lambda_d: 0.3585,
        },
        estimator: { method: 'pava' },
        state: {
            schema_version: 1,
            n_doses: 3,
            n: [3, 6, 3],
            m: [0, 1, 3],
            current_dose: 2,
            eliminated: [false, false, true],
            status: 'running',
            events: [],
        },
    };
}

describe('dose ladder', () => {
    it('flags the current and eliminated doses', () => {
        const table = renderLadder(trialView());
        const rows = Array.from(table.querySelectorAll('tbody tr')) as HTMLElement[];
        expect(rows).toHaveLength(3);
        expect(rows[1].classList.contains('current')).toBe(true);
        expect(rows[2].classList.contains('eliminated')).toBe(true);
        expect(rows[1].textContent).toContain('reference');
    });
});

describe('selection view', () => {
    const base: SelectionView = {
        schema_version: 1,
        trial_id: 't',
        status: 'completed',
        phi: 0.3,
        method: 'both',
        pava: { mtd: 2, estimates: [0.1, 0.31, null], admissible: [1, 2] },
        drm: { mtd: 2, estimates: [0.12, 0.29, 0.55], admissible: [1, 2, 3], link: 'logit' },
        mtd: 2,
    };

    it('shows the MTD card and both estimate columns with distances', () => {
        const view = renderSelection(base, [10, 20, 30]);
        const card = view.querySelector('.mtd-card') as HTMLElement;
        expect(card.dataset.mtd).toBe('2');
        expect(card.textContent).toContain('MTD: dose 2 (20)');
        const secondRow = view.querySelector('tbody tr[data-dose="2"]') as HTMLElement;
        const cells = Array.from(secondRow.querySelectorAll('td')).map(
            (c) => c.textContent,
        );
        // dose, pava estimate, |pava - phi|, drm estimate, |drm - phi|
        expect(cells).toEqual(['2 (20)', '0.310', '0.010', '0.290', '0.010']);
    });

    it('renders the no-selection state', () => {
        const none: SelectionView = {
            ...base,
            status: 'stopped_all_eliminated',
            pava: { mtd: null, estimates: [null, null, null], admissible: [] },
            drm: { mtd: null, estimates: [null, null, null], admissible: [] },
            mtd: null,
        };
        const view = renderSelection(none, [10, 20, 30]);
        const card = view.querySelector('.mtd-card') as HTMLElement;
        expect(card.dataset.mtd).toBe('none');
        expect(card.textContent).toContain('No MTD identified');
    });

    it('keeps rows in ascending dose order', () => {
        const view = renderSelection(base, [10, 20, 30]);
        const order = Array.from(view.querySelectorAll('tbody tr')).map(
            (r) => (r as HTMLElement).dataset.dose,
        );
        expect(order).toEqual(['1', '2', '3']);
    });
});

describe('cohort entry validation', () => {
    beforeEach(() => {
        vi.unstubAllGlobals();
    });

    it('rejects a DLT count above the cohort size without any request', async () => {
        document.body.innerHTML = '<div id="r"></div>';
        const root = document.getElementById('r') as HTMLElement;
        const calls: string[] = [];
        vi.stubGlobal('fetch', async (input: RequestInfo | URL) => {
            calls.push(String(input));
            throw new Error('no network in this test');
        });
        const app = new ConductApp(root, new ConductApi(''));
        app.view = trialView();
        app.render();

        await app.submitCohort('4');
        const banner = root.querySelector('.banner-validation') as HTMLElement;
        expect(banner).not.toBeNull();
        expect(banner.textContent).toContain('between 0 and 3');
        expect(calls).toHaveLength(0);
    });

    it('rejects a fractional DLT count', async () => {
        document.body.innerHTML = '<div id="r"></div>';
        const root = document.getElementById('r') as HTMLElement;
        vi.stubGlobal('fetch', async () => {
            throw new Error('no network in this test');
        });
        const app = new ConductApp(root, new ConductApi(''));
        app.view = trialView();
        await app.submitCohort('1.5');
        expect(root.querySelector('.banner-validation')).not.toBeNull();
    });
});
