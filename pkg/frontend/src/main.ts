import { PipelineClient } from "./api.js";
import { POLL_INTERVAL_MS, resolveApiBase } from "./config.js";
import { DriftView, RequestBrowser, StatsView, StudyView } from "./views.js";

/**
 * Hash-routed single page app. Routes:
 *   #/requests          request browser (default)
 *   #/drift             weekly drift view
 *   #/studies/<id>      one study's fused result
 */

interface ActiveView {
    stop(): void;
}

function mount(client: PipelineClient, root: HTMLElement, hash: string): ActiveView {
    root.innerHTML = "";
    const container = document.createElement("div");
    root.appendChild(container);

    const studyMatch = hash.match(/^#\/studies\/(.+)$/);
    if (studyMatch) {
        const view = new StudyView(client, container, decodeURIComponent(studyMatch[1]), POLL_INTERVAL_MS);
        view.poller.start();
        return { stop: () => view.poller.stop() };
    }
    if (hash === "#/drift") {
        const view = new DriftView(client, container, POLL_INTERVAL_MS);
        view.poller.start();
        return { stop: () => view.poller.stop() };
    }
    const statsEl = document.createElement("div");
    const browserEl = document.createElement("div");
    container.appendChild(statsEl);
    container.appendChild(browserEl);
    const stats = new StatsView(client, statsEl, POLL_INTERVAL_MS);
    const browser = new RequestBrowser(client, browserEl, POLL_INTERVAL_MS, (m) => window.confirm(m));
    stats.poller.start();
    browser.poller.start();
    return {
        stop: () => {
            stats.poller.stop();
            browser.poller.stop();
        },
    };
}

export function start(): void {
    const client = new PipelineClient(resolveApiBase(window));
    const root = document.getElementById("app");
    if (!root) {
        throw new Error("missing #app element");
    }
    let active = mount(client, root, window.location.hash);
    window.addEventListener("hashchange", () => {
        active.stop();
        active = mount(client, root, window.location.hash);
    });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
    start();
}
