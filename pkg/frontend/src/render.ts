import {
    ActiveRules,
    DriftVerdict,
    ImageResult,
    QueueStats,
    RequestRow,
    StudyResult,
    WeeklyRow,
} from "./types.js";

/**
 * Pure view functions: API payloads in, HTML strings out. Every number and
 * flag shown comes verbatim from an API field; the only arithmetic here is
 * chart coordinate scaling, which never changes a displayed value.
 */

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}

/** Render a value exactly as the API sent it. */
export function verbatim(value: unknown): string {
    if (value === null || value === undefined) {
        return "";
    }
    return escapeHtml(String(value));
}

// -- request browser ---------------------------------------------------------

export const REQUEST_STATUSES = ["queued", "processing", "done", "failed", "requeued"];

export function renderRequestTable(rows: RequestRow[]): string {
    if (rows.length === 0) {
        return '<p class="empty">No requests match the current filter.</p>';
    }
    const body = rows.map((row) => {
        const requeueable = row.status === "done" || row.status === "failed";
        const button = requeueable
            ? `<button class="requeue" data-request-id="${verbatim(row.request_id)}">requeue</button>`
            : "";
        return `<tr class="status-${verbatim(row.status)}" data-request-id="${verbatim(row.request_id)}">
            <td class="mono">${verbatim(row.request_id)}</td>
            <td class="mono">${verbatim(row.image_id)}</td>
            <td class="mono"><a href="#/studies/${verbatim(row.study_id)}">${verbatim(row.study_id)}</a></td>
            <td><span class="badge badge-${verbatim(row.status)}">${verbatim(row.status)}</span></td>
            <td class="num">${verbatim(row.attempt_count)}</td>
            <td class="error-cell">${verbatim(row.error)}</td>
            <td>${button}<span class="row-message" data-request-id="${verbatim(row.request_id)}"></span></td>
        </tr>`;
    }).join("\n");
    return `<table class="requests">
        <thead><tr>
            <th>request</th><th>image</th><th>study</th><th>status</th>
            <th>attempts</th><th>error</th><th>actions</th>
        </tr></thead>
        <tbody>${body}</tbody>
    </table>`;
}

export function renderStatusFilter(active: string | null): string {
    const options = ["all", ...REQUEST_STATUSES].map((status) => {
        const value = status === "all" ? "" : status;
        const pressed = (active ?? "") === value ? ' aria-pressed="true"' : ' aria-pressed="false"';
        return `<button class="filter" data-status="${value}"${pressed}>${status}</button>`;
    });
    return `<div class="status-filter">${options.join("")}</div>`;
}

// -- study view --------------------------------------------------------------

export function renderStudyView(study: StudyResult, members: ImageResult[]): string {
    const findingRows = Object.keys(study.scores).map((fid) => {
        const flagged = study.flags[fid];
        const suppressed = study.suppressed.includes(fid);
        const classes = [flagged ? "flagged" : "", suppressed ? "suppressed" : ""]
            .filter((c) => c !== "").join(" ");
        return `<tr class="${classes}">
            <td>${verbatim(fid)}</td>
            <td class="num">${verbatim(study.scores[fid])}</td>
            <td class="flag">${flagged ? "FLAG" : ""}</td>
            <td>${suppressed ? "suppressed by rule" : ""}</td>
        </tr>`;
    }).join("\n");

    const notes = study.notes.length === 0
        ? '<p class="empty">No rule notes.</p>'
        : `<ul class="notes">${study.notes.map((n) => `<li>${verbatim(n)}</li>`).join("")}</ul>`;

    const trace = study.rule_trace.length === 0
        ? ""
        : `<p class="trace">Rules fired: ${study.rule_trace.map(verbatim).join(", ")}</p>`;

    const memberCards = members.map((m) => {
        const stateClass = m.gate_passed ? "member" : "member member-rejected";
        const reason = m.gate_passed ? "" : `<p class="gate-reason">${verbatim(m.gate_reason)}</p>`;
        return `<div class="${stateClass}">
            <span class="mono">${verbatim(m.image_id)}</span>
            <span>orientation: ${verbatim(m.orientation_applied)}</span>
            <span>gate: ${m.gate_passed ? "passed" : "rejected"}</span>
            ${reason}
        </div>`;
    }).join("\n");

    return `<section class="study">
        <h2>Study <span class="mono">${verbatim(study.study_id)}</span></h2>
        <p>Completed via ${verbatim(study.trigger)} with ${study.member_image_ids.length} image(s),
           model trace version recorded per image.</p>
        ${notes}
        ${trace}
        <table class="findings">
            <thead><tr><th>finding</th><th>score</th><th>flag</th><th></th></tr></thead>
            <tbody>${findingRows}</tbody>
        </table>
        <h3>Images</h3>
        <div class="members">${memberCards}</div>
    </section>`;
}

export function renderStudyNotFound(studyId: string): string {
    return `<section class="study">
        <h2>Study not found</h2>
        <p>No aggregated result exists for <span class="mono">${verbatim(studyId)}</span>.
           It may still be processing; this page refreshes automatically.</p>
    </section>`;
}

// -- drift view --------------------------------------------------------------

const CHART_WIDTH = 640;
const CHART_HEIGHT = 220;
const CHART_PAD = 30;

function chartScales(weekly: WeeklyRow[]) {
    const lo = Math.min(...weekly.map((w) => w.p5));
    const hi = Math.max(...weekly.map((w) => w.p95));
    const span = hi - lo || 1;
    const step = weekly.length > 1
        ? (CHART_WIDTH - 2 * CHART_PAD) / (weekly.length - 1)
        : 0;
    const x = (i: number) => CHART_PAD + i * step;
    const y = (v: number) =>
        CHART_HEIGHT - CHART_PAD - ((v - lo) / span) * (CHART_HEIGHT - 2 * CHART_PAD);
    return { x, y };
}

export function renderDriftView(weekly: WeeklyRow[], verdicts: DriftVerdict[]): string {
    if (weekly.length === 0) {
        return '<p class="empty">No drift data yet: the service has not scored any images '
            + "with drift monitoring enabled.</p>";
    }
    const driftedWeeks = new Set(
        verdicts.filter((v) => v.drifted).map((v) => v.window_id),
    );
    const verdictByWeek = new Map(verdicts.map((v) => [v.window_id, v]));

    const { x, y } = chartScales(weekly);
    const upper = weekly.map((w, i) => `${x(i)},${y(w.p95)}`);
    const lower = weekly.map((w, i) => `${x(i)},${y(w.p5)}`).reverse();
    const band = `<polygon class="band" points="${[...upper, ...lower].join(" ")}" />`;
    const median = `<polyline class="median" fill="none" points="${
        weekly.map((w, i) => `${x(i)},${y(w.p50)}`).join(" ")}" />`;
    const markers = weekly.map((w, i) => {
        const cls = driftedWeeks.has(w.window_id) ? "week-marker drifted" : "week-marker";
        return `<circle class="${cls}" data-week="${verbatim(w.window_id)}"
            cx="${x(i)}" cy="${y(w.p50)}" r="5" />`;
    }).join("\n");
    const chart = `<svg class="drift-chart" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}"
        role="img" aria-label="weekly reconstruction error quantiles">
        ${band}
        ${median}
        ${markers}
    </svg>`;

    const rows = weekly.map((w) => {
        const verdict = verdictByWeek.get(w.window_id);
        let verdictText = "no verdict";
        if (verdict) {
            verdictText = verdict.inconclusive
                ? "inconclusive"
                : (verdict.drifted ? "DRIFTED" : "ok");
        }
        const cls = driftedWeeks.has(w.window_id) ? "drifted" : "";
        return `<tr class="${cls}" data-week="${verbatim(w.window_id)}">
            <td class="mono">${verbatim(w.window_id)}</td>
            <td class="num">${verbatim(w.count)}</td>
            <td class="num">${verbatim(w.p5)}</td>
            <td class="num">${verbatim(w.p25)}</td>
            <td class="num">${verbatim(w.p50)}</td>
            <td class="num">${verbatim(w.p75)}</td>
            <td class="num">${verbatim(w.p95)}</td>
            <td class="num">${verbatim(verdict ? verdict.p_value : null)}</td>
            <td class="verdict">${verdictText}</td>
        </tr>`;
    }).join("\n");

    return `<section class="drift">
        ${chart}
        <table class="drift-weeks">
            <thead><tr>
                <th>week</th><th>n</th><th>p5</th><th>p25</th><th>p50</th>
                <th>p75</th><th>p95</th><th>KS p</th><th>verdict</th>
            </tr></thead>
            <tbody>${rows}</tbody>
        </table>
    </section>`;
}

// -- queue stats and rules ---------------------------------------------------

export function renderStatsCard(stats: QueueStats): string {
    const statuses = Object.keys(stats.by_status).map(
        (s) => `<li>${verbatim(s)}: ${verbatim(stats.by_status[s])}</li>`,
    ).join("");
    const latency = Object.keys(stats.stage_latency).map((stage) => {
        const l = stats.stage_latency[stage];
        return `<li>${verbatim(stage)}: p50 ${verbatim(l.p50_ms)} ms, p95 ${verbatim(l.p95_ms)} ms</li>`;
    }).join("");
    return `<section class="stats">
        <p>Accepted ${verbatim(stats.accepted_total)} requests;
           queue depth ${verbatim(stats.queue_depth)};
           in flight ${verbatim(stats.in_flight)};
           workers alive ${verbatim(stats.workers_alive)}.</p>
        <ul class="by-status">${statuses}</ul>
        <ul class="latency">${latency}</ul>
    </section>`;
}

export function renderRulesCard(rules: ActiveRules): string {
    const items = rules.rules.map(
        (r) => `<li><span class="mono">${verbatim(r.id)}</span> (salience ${verbatim(r.salience)})</li>`,
    ).join("");
    return `<section class="rules">
        <p>Rule set version ${verbatim(rules.version)}, ${verbatim(rules.count)} rule(s) active.</p>
        <ul>${items}</ul>
    </section>`;
}

// -- chrome ------------------------------------------------------------------

export function renderBanner(message: string | null): string {
    if (message === null) {
        return "";
    }
    return `<div class="banner" role="alert">${verbatim(message)}</div>`;
}
