/** Typed client for the span-prediction service. */

import type { SpanPair } from './highlight.js';

export interface PredictResponse {
    spans: SpanPair[];
    offsets: number[];
    model: string;
    latency_ms: number;
}

export interface ModelEntry {
    name: string;
    base_checkpoint: string;
    languages: string[];
    reported_span_f1: number | null;
    available: boolean;
    loaded: boolean;
}

export interface DatasetInfo {
    name: string;
    language: string;
    granularity: string;
    total: number;
}

export interface DatasetPost {
    id: string;
    text: string;
    spans?: number[];
    span_pairs?: SpanPair[];
    label?: string;
}

export interface DatasetPage {
    name: string;
    page: number;
    size: number;
    total: number;
    posts: DatasetPost[];
}

export class ApiError extends Error {
    constructor(
        public readonly status: number,
        message: string,
    ) {
        super(message);
        this.name = 'ApiError';
    }
}

export class ApiClient {
    constructor(private readonly baseUrl: string = '') {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await fetch(this.baseUrl + path, init);
        if (!response.ok) {
            let detail = `${response.status} ${response.statusText}`;
            try {
                const body = await response.json();
                if (body && body.detail) {
                    detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
                }
            } catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(response.status, detail);
        }
        return (await response.json()) as T;
    }

    predictSpans(
        text: string,
        model: string,
        signal?: AbortSignal,
        mergeAdjacent = false,
    ): Promise<PredictResponse> {
        return this.request<PredictResponse>('/api/spans', {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ text, model, merge_adjacent: mergeAdjacent }),
            signal,
        });
    }

    getModels(): Promise<ModelEntry[]> {
        return this.request<ModelEntry[]>('/api/models');
    }

    getDatasets(): Promise<DatasetInfo[]> {
        return this.request<DatasetInfo[]>('/api/datasets');
    }

    getDatasetPage(name: string, page: number, size: number, signal?: AbortSignal): Promise<DatasetPage> {
        const query = new URLSearchParams({ page: String(page), size: String(size) });
        return this.request<DatasetPage>(`/api/datasets/${encodeURIComponent(name)}?${query}`, { signal });
    }
}
