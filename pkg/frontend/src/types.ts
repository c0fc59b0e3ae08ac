/**
 * Shapes of the pipeline HTTP API responses, mirrored field for field.
 * The dashboard renders these values verbatim; it never derives numbers
 * of its own.
 */

export interface RequestRow {
    readonly request_id: string;
    readonly image_id: string;
    readonly study_id: string;
    readonly organization_id: string;
    readonly species: string;
    readonly body_part: string;
    readonly submitted_at: number;
    readonly expected_images: number | null;
    readonly status: string;
    readonly attempt_count: number;
    readonly error: string | null;
}

export interface RequestDetail extends RequestRow {
    readonly result: ImageResult | null;
}

export interface ImageResult {
    readonly request_id: string;
    readonly image_id: string;
    readonly model_version: string;
    readonly orientation_applied: string;
    readonly gate_passed: boolean;
    readonly scores: Record<string, number> | null;
    readonly completed_at: number;
    readonly gate_reason: string;
}

export interface StudyResult {
    readonly study_id: string;
    readonly scores: Record<string, number>;
    readonly flags: Record<string, boolean>;
    readonly notes: string[];
    readonly suppressed: string[];
    readonly member_image_ids: string[];
    readonly trigger: string;
    readonly completed_at: number;
    readonly rule_trace: string[];
}

export interface QueueStats {
    readonly accepted_total: number;
    readonly by_status: Record<string, number>;
    readonly queue_depth: number;
    readonly in_flight: number;
    readonly stage_latency: Record<string, { p50_ms: number; p95_ms: number }>;
    readonly workers_alive: number;
}

export interface WeeklyRow {
    readonly window_id: string;
    readonly count: number;
    readonly p5: number;
    readonly p25: number;
    readonly p50: number;
    readonly p75: number;
    readonly p95: number;
}

export interface DriftVerdict {
    readonly window_id: string;
    readonly baseline_quantiles: Record<string, number>;
    readonly window_quantiles: Record<string, number>;
    readonly statistic: number;
    readonly p_value: number;
    readonly drifted: boolean;
    readonly inconclusive: boolean;
    readonly count: number;
}

export interface RuleSummary {
    readonly id: string;
    readonly salience: number;
    readonly conditions: unknown[];
    readonly actions: unknown[];
}

export interface ActiveRules {
    readonly version: string;
    readonly count: number;
    readonly rules: RuleSummary[];
}

export interface IngestAck {
    readonly request_id: string;
    readonly status: string;
    readonly duplicate: boolean;
    readonly queue_position: number;
}
