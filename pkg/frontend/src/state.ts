/** Console view state: a single store drives every render. */

import type { DatasetInfo, ModelEntry, PredictResponse } from './api.js';

export interface ViewState {
    models: ModelEntry[];
    selectedModel: string | null;
    datasets: DatasetInfo[];
    selectedDataset: string | null;
    page: number;
    pageSize: number;
    currentText: string;
    /** Highlights are derived from this response and nothing else. */
    lastResponse: PredictResponse | null;
    requestInFlight: boolean;
    error: string | null;
}

export function initialState(): ViewState {
    return {
        models: [],
        selectedModel: null,
        datasets: [],
        selectedDataset: null,
        page: 0,
        pageSize: 10,
        currentText: '',
        lastResponse: null,
        requestInFlight: false,
        error: null,
    };
}

export class Store {
    private listeners: Array<(state: ViewState) => void> = [];

    constructor(public state: ViewState = initialState()) {}

    update(partial: Partial<ViewState>): void {
        this.state = { ...this.state, ...partial };
        for (const listener of this.listeners) {
            listener(this.state);
        }
    }

    subscribe(listener: (state: ViewState) => void): () => void {
        this.listeners.push(listener);
        return () => {
            this.listeners = this.listeners.filter((l) => l !== listener);
        };
    }
}
