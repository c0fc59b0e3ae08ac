import { ApiError, ApiUnreachableError, PipelineClient } from "./api.js";
import { Poller } from "./poll.js";
import {
    renderBanner,
    renderDriftView,
    renderRequestTable,
    renderStatsCard,
    renderStatusFilter,
    renderStudyNotFound,
    renderStudyView,
} from "./render.js";
import { ImageResult } from "./types.js";

export type ConfirmFn = (message: string) => boolean;

function setBanner(root: HTMLElement, message: string | null): void {
    const slot = root.querySelector<HTMLElement>(".banner-slot");
    if (slot) {
        slot.innerHTML = renderBanner(message);
    }
}

function unreachableMessage(err: unknown): string | null {
    if (err instanceof ApiUnreachableError) {
        return "Pipeline API is unreachable; retrying on the next refresh.";
    }
    return null;
}

/**
 * Request browser: status-filtered request list with a requeue action.
 * Requeueing is an explicit gesture behind a confirmation prompt; 404/409
 * responses are shown inline on the affected row instead of as a page error.
 */
export class RequestBrowser {
    public readonly poller: Poller;
    public statusFilter: string | null = null;

    public constructor(
        private readonly client: PipelineClient,
        private readonly root: HTMLElement,
        intervalMs: number,
        private readonly confirmFn: ConfirmFn,
    ) {
        this.poller = new Poller(() => this.refresh(), intervalMs);
        this.root.innerHTML = '<div class="banner-slot"></div>'
            + '<div class="filter-slot"></div>'
            + '<div class="table-slot"></div>';
        this.renderFilter();
        this.root.addEventListener("click", (event) => void this.onClick(event));
    }

    private renderFilter(): void {
        const slot = this.root.querySelector<HTMLElement>(".filter-slot");
        if (slot) {
            slot.innerHTML = renderStatusFilter(this.statusFilter);
        }
    }

    public async refresh(): Promise<void> {
        try {
            const rows = await this.client.listRequests(this.statusFilter ?? undefined);
            const slot = this.root.querySelector<HTMLElement>(".table-slot");
            if (slot) {
                slot.innerHTML = renderRequestTable(rows);
            }
            setBanner(this.root, null);
        } catch (err) {
            setBanner(this.root, unreachableMessage(err) ?? String(err));
        }
    }

    private async onClick(event: Event): Promise<void> {
        const target = event.target as HTMLElement | null;
        if (!target) {
            return;
        }
        if (target.classList.contains("filter")) {
            const status = target.getAttribute("data-status") ?? "";
            this.statusFilter = status === "" ? null : status;
            this.renderFilter();
            await this.poller.runOnce();
            return;
        }
        if (target.classList.contains("requeue")) {
            const requestId = target.getAttribute("data-request-id");
            if (requestId) {
                await this.requeue(requestId);
            }
        }
    }

    public async requeue(requestId: string): Promise<void> {
        if (!this.confirmFn(`Requeue request ${requestId}? It will be processed again.`)) {
            return;
        }
        const slot = this.root.querySelector<HTMLElement>(
            `.row-message[data-request-id="${requestId}"]`,
        );
        try {
            const ack = await this.client.requeue(requestId);
            if (slot) {
                slot.textContent = `requeued (status: ${ack.status})`;
            }
        } catch (err) {
            if (err instanceof ApiError && (err.status === 404 || err.status === 409)) {
                if (slot) {
                    slot.textContent = err.message;
                }
                return;
            }
            setBanner(this.root, unreachableMessage(err) ?? String(err));
            return;
        }
        await this.refresh();
    }
}

/**
 * Study view: fused scores and flags for one study, plus per-image gate and
 * orientation outcomes fetched through the request list. Missing studies get
 * a dedicated not-found page that keeps polling.
 */
export class StudyView {
    public readonly poller: Poller;

    public constructor(
        private readonly client: PipelineClient,
        private readonly root: HTMLElement,
        private readonly studyId: string,
        intervalMs: number,
    ) {
        this.poller = new Poller(() => this.refresh(), intervalMs);
        this.root.innerHTML = '<div class="banner-slot"></div><div class="study-slot"></div>';
    }

    public async refresh(): Promise<void> {
        const slot = this.root.querySelector<HTMLElement>(".study-slot");
        if (!slot) {
            return;
        }
        try {
            const study = await this.client.getStudy(this.studyId);
            const members = await this.memberResults();
            slot.innerHTML = renderStudyView(study, members);
            setBanner(this.root, null);
        } catch (err) {
            if (err instanceof ApiError && err.status === 404) {
                slot.innerHTML = renderStudyNotFound(this.studyId);
                setBanner(this.root, null);
                return;
            }
            setBanner(this.root, unreachableMessage(err) ?? String(err));
        }
    }

    private async memberResults(): Promise<ImageResult[]> {
        const rows = await this.client.listRequests();
        const members = rows.filter((r) => r.study_id === this.studyId);
        const results: ImageResult[] = [];
        for (const row of members) {
            const detail = await this.client.getRequest(row.request_id);
            if (detail.result) {
                results.push(detail.result);
            }
        }
        results.sort((a, b) => a.image_id.localeCompare(b.image_id));
        return results;
    }
}

/** Drift view: weekly quantile band chart plus the verdict table. */
export class DriftView {
    public readonly poller: Poller;

    public constructor(
        private readonly client: PipelineClient,
        private readonly root: HTMLElement,
        intervalMs: number,
    ) {
        this.poller = new Poller(() => this.refresh(), intervalMs);
        this.root.innerHTML = '<div class="banner-slot"></div><div class="drift-slot"></div>';
    }

    public async refresh(): Promise<void> {
        const slot = this.root.querySelector<HTMLElement>(".drift-slot");
        if (!slot) {
            return;
        }
        try {
            const weekly = await this.client.driftWeekly();
            const verdicts = await this.client.driftVerdicts();
            slot.innerHTML = renderDriftView(weekly, verdicts);
            setBanner(this.root, null);
        } catch (err) {
            setBanner(this.root, unreachableMessage(err) ?? String(err));
        }
    }
}

/** Queue health card shown on the overview page. */
export class StatsView {
    public readonly poller: Poller;

    public constructor(
        private readonly client: PipelineClient,
        private readonly root: HTMLElement,
        intervalMs: number,
    ) {
        this.poller = new Poller(() => this.refresh(), intervalMs);
        this.root.innerHTML = '<div class="banner-slot"></div><div class="stats-slot"></div>';
    }

    public async refresh(): Promise<void> {
        const slot = this.root.querySelector<HTMLElement>(".stats-slot");
        if (!slot) {
            return;
        }
        try {
            slot.innerHTML = renderStatsCard(await this.client.queueStats());
            setBanner(this.root, null);
        } catch (err) {
            setBanner(this.root, unreachableMessage(err) ?? String(err));
        }
    }
}
