/**
 * Moderation console: model switcher, dataset browser, and a custom-text box
 * whose offensive spans are highlighted in red.
 *
 * All rendering is driven by the store; submitted texts follow a single-flight
 * policy (the latest submission wins, superseded responses are dropped).
 */

import { ApiClient, ApiError, DatasetPost } from './api.js';
import { renderHighlights, SpanPair } from './highlight.js';
import { SingleFlight } from './singleFlight.js';
import { Store } from './state.js';

export interface AppHandle {
    store: Store;
    init(): Promise<void>;
    submit(): Promise<void>;
    browse(): Promise<void>;
    root: HTMLElement;
}

function element<K extends keyof HTMLElementTagNameMap>(
    doc: Document,
    tag: K,
    className?: string,
    testId?: string,
): HTMLElementTagNameMap[K] {
    const node = doc.createElement(tag);
    if (className) node.className = className;
    if (testId) node.dataset.testid = testId;
    return node;
}

export function createApp(root: HTMLElement, client: ApiClient, doc: Document = document): AppHandle {
    const store = new Store();
    const predictFlight = new SingleFlight();
    const browseFlight = new SingleFlight();

    // --- static layout -----------------------------------------------------

    const layout = element(doc, 'div', 'layout');
    const sidebar = element(doc, 'aside', 'sidebar');
    const main = element(doc, 'main', 'content');
    layout.append(sidebar, main);
    root.append(layout);

    const modelSection = element(doc, 'section');
    modelSection.append(Object.assign(element(doc, 'h2'), { textContent: 'Available models' }));
    const modelList = element(doc, 'div', 'model-list', 'model-list');
    modelSection.append(modelList);

    const datasetSection = element(doc, 'section');
    datasetSection.append(Object.assign(element(doc, 'h2'), { textContent: 'Datasets' }));
    const datasetSelect = element(doc, 'select', 'dataset-select', 'dataset-select');
    const pager = element(doc, 'div', 'pager');
    const prevButton = Object.assign(element(doc, 'button', '', 'prev-page'), { textContent: '< prev' });
    const pageLabel = element(doc, 'span', 'page-label', 'page-label');
    const nextButton = Object.assign(element(doc, 'button', '', 'next-page'), { textContent: 'next >' });
    pager.append(prevButton, pageLabel, nextButton);
    const predToggleLabel = element(doc, 'label', 'pred-toggle');
    const predToggle = element(doc, 'input', '', 'show-predictions');
    predToggle.type = 'checkbox';
    predToggleLabel.append(predToggle, doc.createTextNode(' show model predictions'));
    datasetSection.append(datasetSelect, pager, predToggleLabel);
    sidebar.append(modelSection, datasetSection);

    const analyzeSection = element(doc, 'section', 'analyze');
    analyzeSection.append(Object.assign(element(doc, 'h2'), { textContent: 'Analyze a custom text' }));
    const textInput = element(doc, 'textarea', 'text-input', 'text-input');
    textInput.placeholder = 'Type a text and press Ctrl+Enter';
    const controls = element(doc, 'div', 'controls');
    const submitButton = Object.assign(element(doc, 'button', '', 'submit'), { textContent: 'Analyze' });
    const spinner = Object.assign(element(doc, 'span', 'spinner', 'spinner'), {
        textContent: 'analyzing…',
        hidden: true,
    });
    controls.append(submitButton, spinner);
    const errorBanner = element(doc, 'div', 'error-banner', 'error-banner');
    errorBanner.hidden = true;
    const errorMessage = element(doc, 'span', 'error-message', 'error-message');
    const retryButton = Object.assign(element(doc, 'button', '', 'retry'), { textContent: 'Retry' });
    errorBanner.append(errorMessage, retryButton);
    const result = element(doc, 'div', 'result', 'result');
    analyzeSection.append(textInput, controls, errorBanner, result);

    const browseSection = element(doc, 'section', 'browser');
    browseSection.append(Object.assign(element(doc, 'h2'), { textContent: 'Dataset browser' }));
    const browseStatus = element(doc, 'div', 'browse-status', 'browse-status');
    const postList = element(doc, 'ol', 'posts', 'post-list');
    browseSection.append(browseStatus, postList);
    main.append(analyzeSection, browseSection);

    // --- rendering ----------------------------------------------------------

    function renderResult(): void {
        const { lastResponse, currentText } = store.state;
        result.replaceChildren();
        if (!lastResponse) return;
        const rendered = renderHighlights(currentText, lastResponse.spans, doc);
        if (rendered.error) {
            showError(`bad spans from service: ${rendered.error}`);
        }
        const meta = element(doc, 'div', 'result-meta');
        meta.textContent =
            `model ${lastResponse.model} · ${lastResponse.spans.length} span(s) · ` +
            `${lastResponse.latency_ms.toFixed(1)} ms`;
        result.append(rendered.element, meta);
    }

    function showError(message: string): void {
        store.update({ error: message });
        errorMessage.textContent = message;
        errorBanner.hidden = false;
    }

    function clearError(): void {
        store.update({ error: null });
        errorBanner.hidden = true;
        errorMessage.textContent = '';
    }

    function setSpinner(on: boolean): void {
        store.update({ requestInFlight: on });
        spinner.hidden = !on;
    }

    function renderModels(): void {
        modelList.replaceChildren();
        for (const model of store.state.models) {
            const label = element(doc, 'label', 'model-option');
            const radio = element(doc, 'input');
            radio.type = 'radio';
            radio.name = 'model';
            radio.value = model.name;
            radio.disabled = !model.available;
            radio.checked = model.name === store.state.selectedModel;
            radio.addEventListener('change', () => {
                store.update({ selectedModel: model.name });
                if (predToggle.checked) void browse();
            });
            const f1 = model.reported_span_f1 === null ? '' : ` (F1 ${model.reported_span_f1})`;
            label.append(radio, doc.createTextNode(` ${model.name}${f1}`));
            modelList.append(label);
        }
    }

    function renderPost(post: DatasetPost, spans: SpanPair[], note: string): HTMLElement {
        const item = element(doc, 'li', 'post');
        const head = element(doc, 'div', 'post-head');
        head.textContent = post.label ? `#${post.id} [${post.label}] ${note}` : `#${post.id} ${note}`;
        const rendered = renderHighlights(post.text, spans, doc);
        item.append(head, rendered.element);
        return item;
    }

    // --- actions ------------------------------------------------------------

    async function submit(): Promise<void> {
        const text = textInput.value;
        const model = store.state.selectedModel;
        if (!text.trim() || !model) return;
        clearError();
        setSpinner(true);
        store.update({ currentText: text });
        try {
            const response = await predictFlight.run((signal) =>
                client.predictSpans(text, model, signal),
            );
            if (response === undefined) return; // superseded by a newer submit
            store.update({ lastResponse: response });
            setSpinner(false);
            renderResult();
        } catch (error) {
            setSpinner(false);
            const message = error instanceof ApiError ? error.message : `request failed: ${error}`;
            showError(message); // previous highlights stay untouched
        }
    }

    async function browse(): Promise<void> {
        const name = store.state.selectedDataset;
        if (!name) return;
        const { page, pageSize, selectedModel } = store.state;
        browseStatus.textContent = 'loading…';
        browseStatus.classList.remove('unavailable');
        try {
            const pageData = await browseFlight.run(async (signal) => {
                const data = await client.getDatasetPage(name, page, pageSize, signal);
                if (predToggle.checked && selectedModel) {
                    // batch size 1 on the server; keep requests sequential
                    const predictions: SpanPair[][] = [];
                    for (const post of data.posts) {
                        const response = await client.predictSpans(post.text, selectedModel, signal);
                        predictions.push(response.spans);
                    }
                    return { data, predictions };
                }
                return { data, predictions: null };
            });
            if (pageData === undefined) return; // superseded navigation
            const { data, predictions } = pageData;
            postList.replaceChildren();
            data.posts.forEach((post, index) => {
                const spans = predictions ? predictions[index] : (post.span_pairs ?? []);
                const note = predictions ? `· ${selectedModel}` : '· gold';
                postList.append(renderPost(post, spans, note));
            });
            const pages = Math.max(1, Math.ceil(data.total / pageSize));
            pageLabel.textContent = `page ${page + 1} / ${pages}`;
            browseStatus.textContent = `${data.total} post(s) in ${name}`;
            nextButton.disabled = (page + 1) * pageSize >= data.total;
            prevButton.disabled = page === 0;
        } catch (error) {
            if (error instanceof ApiError && error.status === 404) {
                browseStatus.textContent = `dataset ${name} unavailable`;
                browseStatus.classList.add('unavailable');
            } else {
                browseStatus.textContent = `failed to load ${name}: ${error}`;
            }
        }
    }

    async function init(): Promise<void> {
        try {
            const [models, datasets] = await Promise.all([client.getModels(), client.getDatasets()]);
            const firstAvailable = models.find((m) => m.available) ?? models[0];
            store.update({
                models,
                datasets,
                selectedModel: firstAvailable ? firstAvailable.name : null,
                selectedDataset: datasets.length ? datasets[0].name : null,
            });
            renderModels();
            datasetSelect.replaceChildren();
            for (const info of datasets) {
                const option = element(doc, 'option');
                option.value = info.name;
                option.textContent = `${info.name} (${info.total})`;
                datasetSelect.append(option);
            }
            if (store.state.selectedDataset) await browse();
        } catch (error) {
            showError(`failed to reach the service: ${error}`);
        }
    }

    // --- events ---------------------------------------------------------

    textInput.addEventListener('keydown', (event: KeyboardEvent) => {
        if (event.key === 'Enter' && (event.ctrlKey || event.metaKey)) {
            event.preventDefault();
            void submit();
        }
    });
    submitButton.addEventListener('click', () => void submit());
    retryButton.addEventListener('click', () => void submit());
    datasetSelect.addEventListener('change', () => {
        store.update({ selectedDataset: datasetSelect.value, page: 0 });
        void browse();
    });
    prevButton.addEventListener('click', () => {
        if (store.state.page > 0) {
            store.update({ page: store.state.page - 1 });
            void browse();
        }
    });
    nextButton.addEventListener('click', () => {
        store.update({ page: store.state.page + 1 });
        void browse();
    });
    predToggle.addEventListener('change', () => void browse());

    return { store, init, submit, browse, root };
}
