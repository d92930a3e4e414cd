import { ApiClient } from './api.js';
import { createApp } from './app.js';

declare global {
    interface Window {
        TOXSPAN_API_BASE?: string;
    }
}

const root = document.getElementById('app');
if (root) {
    // Same-origin by default; standalone deployments set window.TOXSPAN_API_BASE.
    const client = new ApiClient(window.TOXSPAN_API_BASE ?? '');
    const app = createApp(root, client);
    void app.init();
}
