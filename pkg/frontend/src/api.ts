import {
    ActiveRules,
    DriftVerdict,
    QueueStats,
    RequestDetail,
    RequestRow,
    StudyResult,
    WeeklyRow,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx response from the pipeline; status distinguishes 404 from 409. */
export class ApiError extends Error {
    public constructor(public readonly status: number, message: string) {
        super(message);
        this.name = "ApiError";
    }
}

/** The service could not be reached at all (network error, server down). */
export class ApiUnreachableError extends Error {
    public constructor(message: string) {
        super(message);
        this.name = "ApiUnreachableError";
    }
}

/**
 * Thin typed client for the pipeline HTTP API. Every method maps to one
 * endpoint and returns the decoded JSON body unchanged.
 */
export class PipelineClient {
    private readonly fetchFn: FetchLike;

    public constructor(private readonly baseUrl: string, fetchFn?: FetchLike) {
        this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
    }

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        let response: Response;
        try {
            response = await this.fetchFn(this.baseUrl + path, init);
        } catch (err) {
            throw new ApiUnreachableError(`cannot reach pipeline at ${this.baseUrl}: ${err}`);
        }
        if (!response.ok) {
            let detail = response.statusText;
            try {
                const body = await response.json();
                if (typeof body.detail === "string") {
                    detail = body.detail;
                }
            } catch {
                // keep the status text when the body is not JSON
            }
            throw new ApiError(response.status, detail);
        }
        return response.json() as Promise<T>;
    }

    public listRequests(status?: string): Promise<RequestRow[]> {
        const query = status ? `?status=${encodeURIComponent(status)}` : "";
        return this.request(`/v1/requests${query}`);
    }

    public getRequest(requestId: string): Promise<RequestDetail> {
        return this.request(`/v1/requests/${encodeURIComponent(requestId)}`);
    }

    public requeue(requestId: string): Promise<{ request_id: string; status: string }> {
        return this.request(`/v1/requests/${encodeURIComponent(requestId)}/requeue`, {
            method: "POST",
        });
    }

    public getStudy(studyId: string): Promise<StudyResult> {
        return this.request(`/v1/studies/${encodeURIComponent(studyId)}`);
    }

    public queueStats(): Promise<QueueStats> {
        return this.request("/v1/queue/stats");
    }

    public driftWeekly(): Promise<WeeklyRow[]> {
        return this.request("/v1/drift/weekly");
    }

    public driftVerdicts(): Promise<DriftVerdict[]> {
        return this.request("/v1/drift/verdicts");
    }

    public activeRules(): Promise<ActiveRules> {
        return this.request("/v1/rules");
    }
}
