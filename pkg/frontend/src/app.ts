/**
 * Conduct controller: owns the session state and the render loop.
 *
 * State transitions happen only on server responses.  After every
 * successful mutation the trial is refetched so the rendered ladder and
 * history always mirror the server's event log; a cohort decision is
 * shown strictly from the POST /cohorts reply, never computed here.
 * Conflicts (409) surface a reload prompt, transport failures a retry
 * banner, and neither touches the local view.
 */

import { ApiError, ConductApi } from './api.js';
import type {
    CohortReply,
    CreateTrialRequest,
    SelectionView,
    TrialView,
} from './api.js';
import {
    renderBanner,
    renderBoundaries,
    renderError,
    renderHistory,
    renderLadder,
    renderSelection,
} from './render.js';

export interface CreateFormValues {
    doses: number[];
    refIndex: number;
    phi: number;
    method: 'pava' | 'drm';
    link?: 'logit' | 'loglog' | 'cloglog';
    prior?: { gamma0: number; var0: number; gamma1: number; var1: number };
}

interface Notice {
    kind: 'conflict' | 'network' | 'validation';
    message: string;
}

export class ConductApp {
    readonly api: ConductApi;
    private readonly root: HTMLElement;
    view: TrialView | null = null;
    lastReply: CohortReply | null = null;
    selection: SelectionView | null = null;
    private notice: Notice | null = null;

    constructor(root: HTMLElement, api: ConductApi) {
        this.root = root;
        this.api = api;
    }

    async createTrial(values: CreateFormValues): Promise<void> {
        const req: CreateTrialRequest = {
            schema_version: 1,
            doses: values.doses,
            ref_index: values.refIndex,
            design: { phi: values.phi },
            estimator: {
                method: values.method,
                link: values.method === 'drm' ? values.link : undefined,
                prior: values.method === 'drm' ? values.prior : undefined,
            },
            start_dose: 1,
        };
        try {
            this.view = await this.api.createTrial(req);
            this.lastReply = null;
            this.selection = null;
            this.notice = null;
        } catch (err) {
            this.noteError(err);
        }
        this.render();
    }

    /** Enter one cohort's DLT count; everything else comes from the server. */
    async submitCohort(dltRaw: string): Promise<void> {
        const view = this.view;
        if (!view || view.state.status !== 'running') return;
        const cohortSize = view.design.cohort_size;
        const dlt = Number(dltRaw);
        if (!Number.isInteger(dlt) || dlt < 0 || dlt > cohortSize) {
            this.notice = {
                kind: 'validation',
                message: `DLT count must be an integer between 0 and ${cohortSize}`,
            };
            this.render();
            return;
        }
        try {
            const reply = await this.api.postCohort(view.trial_id, {
                schema_version: 1,
                dose_level: view.state.current_dose,
                n: cohortSize,
                dlt,
                cohort_index: view.state.events.length + 1,
            });
            this.lastReply = reply;
            this.notice = null;
            await this.refresh();
        } catch (err) {
            this.noteError(err);
        }
        this.render();
    }

    /** Refetch trial state (and selection once finished) from the server. */
    async refresh(): Promise<void> {
        if (!this.view) return;
        this.view = await this.api.getTrial(this.view.trial_id);
        if (this.view.state.status !== 'running') {
            this.selection = await this.api.getSelection(this.view.trial_id, 'both');
        }
    }

    async reload(): Promise<void> {
        try {
            await this.refresh();
            this.notice = null;
            this.lastReply = null;
        } catch (err) {
            this.noteError(err);
        }
        this.render();
    }

    private noteError(err: unknown): void {
        if (err instanceof ApiError && err.isConflict) {
            this.notice = {
                kind: 'conflict',
                message: `Out of date with the server (${err.detail}); reload the trial`,
            };
        } else if (err instanceof ApiError && err.isNetwork) {
            this.notice = {
                kind: 'network',
                message: 'Request failed to reach the server; retry',
            };
        } else if (err instanceof ApiError) {
            this.notice = { kind: 'validation', message: err.detail };
        } else {
            this.notice = { kind: 'network', message: String(err) };
        }
    }

    render(): void {
        this.root.textContent = '';
        if (this.notice) {
            const banner = renderError(this.notice.message, this.notice.kind);
            if (this.notice.kind !== 'validation') {
                const btn = document.createElement('button');
                btn.textContent = this.notice.kind === 'conflict' ? 'Reload' : 'Retry';
                btn.dataset.testid = 'reload';
                btn.addEventListener('click', () => void this.reload());
                banner.appendChild(btn);
            }
            this.root.appendChild(banner);
        }
        const view = this.view;
        if (!view) return;

        if (this.lastReply && !this.notice) {
            this.root.appendChild(renderBanner(this.lastReply));
        }
        this.root.appendChild(renderLadder(view));

        if (view.state.status === 'running') {
            this.root.appendChild(this.cohortForm(view));
        } else if (this.selection) {
            this.root.appendChild(renderSelection(this.selection, view.doses));
        }
        this.root.appendChild(renderHistory(view.state.events));
        this.root.appendChild(renderBoundaries(view));
    }

    private cohortForm(view: TrialView): HTMLElement {
        const form = document.createElement('form');
        form.className = 'cohort-form';
        form.dataset.testid = 'cohort-form';
        const label = document.createElement('label');
        label.textContent =
            `Cohort ${view.state.events.length + 1} at dose ` +
            `${view.state.current_dose}: DLTs out of ${view.design.cohort_size}`;
        const input = document.createElement('input');
        input.name = 'dlt';
        input.type = 'number';
        input.min = '0';
        input.max = String(view.design.cohort_size);
        input.step = '1';
        input.required = true;
        label.appendChild(input);
        form.appendChild(label);
        const submit = document.createElement('button');
        submit.type = 'submit';
        submit.textContent = 'Record cohort';
        form.appendChild(submit);
        form.addEventListener('submit', (ev) => {
            ev.preventDefault();
            void this.submitCohort(input.value);
        });
        return form;
    }
}
