import {FieldError, MetricName, METRICS, RatingBody} from "./types";

/**
 * Pure state for one rating form. Client-side validation mirrors the
 * server's rules exactly, so an invalid submission can never leave the
 * browser: scores are integers 1-5, the feeling must come from the
 * configured list, and submit stays disabled until everything is set.
 */
export class RatingForm {
    private scores: Partial<Record<MetricName, number>> = {};
    private feeling: string | null = null;
    comment = "";

    constructor(public readonly feelings: string[]) {}

    setScore(metric: MetricName, value: number): void {
        if (!METRICS.includes(metric)) {
            throw new Error(`unknown metric ${metric}`);
        }
        if (!Number.isInteger(value) || value < 1 || value > 5) {
            throw new Error(`${metric} must be an integer between 1 and 5`);
        }
        this.scores[metric] = value;
    }

    getScore(metric: MetricName): number | undefined {
        return this.scores[metric];
    }

    setFeeling(feeling: string): void {
        if (!this.feelings.includes(feeling)) {
            throw new Error(`feeling must be one of ${this.feelings.join(", ")}`);
        }
        this.feeling = feeling;
    }

    getFeeling(): string | null {
        return this.feeling;
    }

    /** First missing or invalid field, or null when the form is complete. */
    firstProblem(): FieldError | null {
        for (const metric of METRICS) {
            const value = this.scores[metric];
            if (value === undefined) {
                return {field: metric, reason: "required"};
            }
            if (!Number.isInteger(value) || value < 1 || value > 5) {
                return {field: metric, reason: "must be an integer between 1 and 5"};
            }
        }
        if (this.feeling === null) {
            return {field: "feeling", reason: "required"};
        }
        if (!this.feelings.includes(this.feeling)) {
            return {field: "feeling", reason: "not in the configured list"};
        }
        return null;
    }

    canSubmit(): boolean {
        return this.firstProblem() === null;
    }

    body(transcriptId: string, raterId: string): RatingBody {
        const problem = this.firstProblem();
        if (problem) {
            throw new Error(`form incomplete: ${problem.field} ${problem.reason}`);
        }
        return {
            transcript_id: transcriptId,
            rater_id: raterId,
            readability: this.scores.readability!,
            correctness: this.scores.correctness!,
            human_likeness: this.scores.human_likeness!,
            feeling: this.feeling!,
            comment: this.comment,
        };
    }

    reset(): void {
        this.scores = {};
        this.feeling = null;
        this.comment = "";
    }
}
