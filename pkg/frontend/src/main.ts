/**
 * Entry point: resolves the API base URL (?api= query parameter, then the
 * window.API_BASE global, then same-origin) and mounts the conduct app
 * with a create-trial form prefilled for the standard six-dose design.
 */

import { ConductApi } from './api.js';
import { ConductApp } from './app.js';
import type { CreateFormValues } from './app.js';

declare global {
    interface Window {
        API_BASE?: string;
    }
}

const DEFAULTS: CreateFormValues = {
    doses: [10, 20, 30, 45, 60, 80],
    refIndex: 3,
    phi: 0.3,
    method: 'drm',
    link: 'logit',
    prior: { gamma0: -1.592, var0: 1.371, gamma1: 0.412, var1: 0.784 },
};

export function resolveBaseUrl(search: string, global?: string): string {
    const fromQuery = new URLSearchParams(search).get('api');
    return fromQuery ?? global ?? '';
}

function parseForm(form: HTMLFormElement): CreateFormValues {
    const data = new FormData(form);
    const method = data.get('method') === 'pava' ? 'pava' : 'drm';
    const values: CreateFormValues = {
        doses: String(data.get('doses'))
            .split(',')
            .map((s) => Number(s.trim())),
        refIndex: Number(data.get('ref_index')),
        phi: Number(data.get('phi')),
        method,
    };
    if (method === 'drm') {
        values.link = String(data.get('link')) as CreateFormValues['link'];
        values.prior = {
            gamma0: Number(data.get('gamma0')),
            var0: Number(data.get('var0')),
            gamma1: Number(data.get('gamma1')),
            var1: Number(data.get('var1')),
        };
    }
    return values;
}

export function mount(doc: Document): ConductApp {
    const api = new ConductApi(
        resolveBaseUrl(doc.defaultView?.location.search ?? '', doc.defaultView?.API_BASE),
    );
    const root = doc.getElementById('trial-root');
    const form = doc.getElementById('create-form') as HTMLFormElement | null;
    if (!root || !form) throw new Error('missing #trial-root or #create-form');
    const app = new ConductApp(root, api);

    (form.elements.namedItem('doses') as HTMLInputElement).value =
        DEFAULTS.doses.join(', ');
    (form.elements.namedItem('ref_index') as HTMLInputElement).value =
        String(DEFAULTS.refIndex);
    (form.elements.namedItem('phi') as HTMLInputElement).value =
        String(DEFAULTS.phi);
    (form.elements.namedItem('gamma0') as HTMLInputElement).value =
        String(DEFAULTS.prior!.gamma0);
    (form.elements.namedItem('var0') as HTMLInputElement).value =
        String(DEFAULTS.prior!.var0);
    (form.elements.namedItem('gamma1') as HTMLInputElement).value =
        String(DEFAULTS.prior!.gamma1);
    (form.elements.namedItem('var1') as HTMLInputElement).value =
        String(DEFAULTS.prior!.var1);

    form.addEventListener('submit', (ev) => {
        ev.preventDefault();
        void app.createTrial(parseForm(form));
        form.hidden = true;
    });
    return app;
}

if (typeof document !== 'undefined' && document.getElementById('trial-root')) {
    mount(document);
}
