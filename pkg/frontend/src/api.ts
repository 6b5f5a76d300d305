/**
 * Typed client for the trial-conduct REST service (schema_version 1).
 *
 * Every mutation returns the server's own decision payload; nothing in
 * this module derives or caches trial logic locally.  Errors carry the
 * HTTP status so the UI can distinguish validation (400/422), conflicts
 * (409) and transport failures (status 0).
 */

export type Decision = 'escalate' | 'retain' | 'deescalate';
export type TrialStatus = 'running' | 'completed' | 'stopped_all_eliminated';
export type Link = 'logit' | 'loglog' | 'cloglog';

export interface PriorPayload {
    gamma0: number;
    var0: number;
    gamma1: number;
    var1: number;
}

export interface EstimatorPayload {
    method: 'pava' | 'drm';
    link?: Link | null;
    prior?: PriorPayload | null;
}

export interface DesignPayload {
    phi: number;
    phi1?: number | null;
    phi2?: number | null;
    cohort_size?: number;
    n_cohorts?: number;
    elim_threshold?: number;
    elim_min_n?: number;
    lambda_e?: number;
    lambda_d?: number;
}

export interface CohortEvent {
    cohort_index: number;
    dose: number;
    n: number;
    dlt: number;
    decision: Decision;
    eliminations: number[];
}

export interface TrialState {
    schema_version: number;
    n_doses: number;
    n: number[];
    m: number[];
    current_dose: number;
    eliminated: boolean[];
    status: TrialStatus;
    events: CohortEvent[];
}

export interface TrialView {
    schema_version: number;
    trial_id: string;
    doses: number[];
    ref_index: number;
    design: Required<DesignPayload>;
    estimator: EstimatorPayload;
    state: TrialState;
    boundaries?: { lambda_e: number; lambda_d: number };
}

export interface CreateTrialRequest {
    schema_version: number;
    doses: number[];
    ref_index: number;
    design: DesignPayload;
    estimator: EstimatorPayload;
    start_dose: number;
    idempotency_key?: string;
}

export interface CohortRequest {
    schema_version: number;
    dose_level: number;
    n: number;
    dlt: number;
    cohort_index?: number;
}

export interface CohortReply {
    schema_version: number;
    trial_id: string;
    decision: Decision;
    next_dose: number;
    eliminations: number[];
    status: TrialStatus;
    state: TrialState;
}

export interface SelectionBlock {
    mtd: number | null;
    estimates: (number | null)[];
    admissible: number[];
    link?: Link;
}

export interface SelectionView {
    schema_version: number;
    trial_id: string;
    status: TrialStatus;
    phi: number;
    method: string;
    pava?: SelectionBlock;
    drm?: SelectionBlock;
    mtd: number | null;
}

export interface EventLog {
    schema_version: number;
    trial_id: string;
    events: CohortEvent[];
}

/** HTTP-level failure; status 0 means the request never reached the server. */
export class ApiError extends Error {
    readonly status: number;
    readonly detail: string;

    constructor(status: number, detail: string) {
        super(`HTTP ${status}: ${detail}`);
        this.name = 'ApiError';
        this.status = status;
        this.detail = detail;
    }

    get isConflict(): boolean {
        return this.status === 409;
    }

    get isNetwork(): boolean {
        return this.status === 0;
    }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
        resp = await fetch(url, init);
    } catch (err) {
        throw new ApiError(0, err instanceof Error ? err.message : String(err));
    }
    let body: unknown = null;
    try {
        body = await resp.json();
    } catch {
        // non-JSON body; fall through with the status alone
    }
    if (!resp.ok) {
        const detail =
            body !== null && typeof body === 'object' && 'detail' in body
                ? JSON.stringify((body as { detail: unknown }).detail)
                : resp.statusText;
        throw new ApiError(resp.status, detail);
    }
    return body as T;
}

export class ConductApi {
    constructor(readonly baseUrl: string = '') {}

    private url(path: string): string {
        return `${this.baseUrl}${path}`;
    }

    createTrial(req: CreateTrialRequest): Promise<TrialView> {
        return request<TrialView>(this.url('/trials'), {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify(req),
        });
    }

    getTrial(trialId: string): Promise<TrialView> {
        return request<TrialView>(this.url(`/trials/${trialId}`));
    }

    postCohort(trialId: string, body: CohortRequest): Promise<CohortReply> {
        return request<CohortReply>(this.url(`/trials/${trialId}/cohorts`), {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify(body),
        });
    }

    getEvents(trialId: string): Promise<EventLog> {
        return request<EventLog>(this.url(`/trials/${trialId}/events`));
    }

    getSelection(trialId: string, method = 'both'): Promise<SelectionView> {
        return request<SelectionView>(
            this.url(`/trials/${trialId}/selection?method=${method}`),
        );
    }
}
