import {FieldError, RatingBody, Task} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export type SubmitResult =
    | {kind: "ok"; status: "created" | "replaced"}
    | {kind: "rejected"; error: FieldError};

/**
 * Thin typed client over the rating service API. Transport is
 * injectable so tests can simulate server responses and network drops;
 * network failures are re-thrown for the caller to handle (the form
 * keeps its state and offers a retry).
 */
export class ApiClient {
    constructor(
        private readonly base: string = "",
        private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    ) {}

    async nextTask(raterId: string): Promise<Task | null> {
        const response = await this.fetchFn(
            `${this.base}/api/tasks/next?rater=${encodeURIComponent(raterId)}`,
        );
        if (response.status === 204) {
            return null;
        }
        if (!response.ok) {
            throw new Error(`task fetch failed with status ${response.status}`);
        }
        return (await response.json()) as Task;
    }

    async submitRating(body: RatingBody): Promise<SubmitResult> {
        const response = await this.fetchFn(`${this.base}/api/ratings`, {
            method: "POST",
            headers: {"Content-Type": "application/json"},
            body: JSON.stringify(body),
        });
        if (response.status === 201) {
            const payload = (await response.json()) as {status: "created" | "replaced"};
            return {kind: "ok", status: payload.status};
        }
        if (response.status === 400) {
            return {kind: "rejected", error: (await response.json()) as FieldError};
        }
        throw new Error(`rating submission failed with status ${response.status}`);
    }

    async feelings(): Promise<string[]> {
        const response = await this.fetchFn(`${this.base}/api/feelings`);
        if (!response.ok) {
            throw new Error(`feelings fetch failed with status ${response.status}`);
        }
        return (await response.json()) as string[];
    }

    async report(dataset?: string): Promise<any> {
        const suffix = dataset ? `?dataset=${encodeURIComponent(dataset)}` : "";
        const response = await this.fetchFn(`${this.base}/api/report${suffix}`);
        if (!response.ok) {
            throw new Error(`report fetch failed with status ${response.status}`);
        }
        return response.json();
    }
}
