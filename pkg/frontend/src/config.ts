/**
 * Runtime configuration. The API base URL is resolved when the page loads,
 * not at build time, so one static bundle can point at any pipeline:
 *   1. `?api=http://host:port` query parameter,
 *   2. `window.VETRAD_API_BASE` set by an inline script or injected config,
 *   3. same origin as the page.
 */

declare global {
    interface Window {
        VETRAD_API_BASE?: string;
    }
}

export function resolveApiBase(win: Pick<Window, "location" | "VETRAD_API_BASE">): string {
    const params = new URLSearchParams(win.location.search);
    const fromQuery = params.get("api");
    if (fromQuery) {
        return fromQuery.replace(/\/$/, "");
    }
    if (win.VETRAD_API_BASE) {
        return win.VETRAD_API_BASE.replace(/\/$/, "");
    }
    return win.location.origin;
}

export const POLL_INTERVAL_MS = 2000;
