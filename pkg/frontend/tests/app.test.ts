import {beforeEach, describe, expect, it} from "vitest";

import {ApiClient, FetchLike} from "../src/api";
import {RatingApp} from "../src/main";
import {Task} from "../src/types";

const FEELINGS = ["like", "amusing", "indifferent", "annoyed", "scared"];

function makeTask(id: number): Task {
    return {
        transcript_id: `micro:img-${id}`,
        dataset: "micro",
        image_id: `img-${id}`,
        image_ref: `img-${id}`,
        text: "",
        pairs: [
            {q: "what color is the cube", a: "red", confidence: 0.9, flag: "affirmative", q_log_prob: -1},
            {q: "what is on the left", a: "sphere", confidence: 0.1, flag: "questionable", q_log_prob: -2},
            {q: "how many red objects are there", a: "two", confidence: 0.55, flag: "affirmative", q_log_prob: -1.5},
            {q: "what is on the back", a: "cube", confidence: 0.2, flag: "questionable", q_log_prob: -2.2},
            {q: "", a: "red", confidence: 0.4, flag: "affirmative", q_log_prob: -0.4},
        ],
    };
}

interface FakeServer {
    fetch: FetchLike;
    calls: string[];
    ratings: Map<string, any>;
    failNextSubmit: boolean;
    rejectField: string | null;
}

function fakeServer(taskCount: number): FakeServer {
    const tasks = Array.from({length: taskCount}, (_, k) => makeTask(k));
    const server: FakeServer = {
        calls: [],
        ratings: new Map(),
        failNextSubmit: false,
        rejectField: null,
        fetch: async (url, init) => {
            server.calls.push(`${init?.method ?? "GET"} ${url}`);
            if (url.includes("/api/feelings")) {
                return new Response(JSON.stringify(FEELINGS), {status: 200});
            }
            if (url.includes("/api/tasks/next")) {
                const rater = new URL(`http://x${url}`).searchParams.get("rater")!;
                const open = tasks.find((t) => !server.ratings.has(`${t.transcript_id}|${rater}`));
                if (!open) {
                    return new Response(null, {status: 204});
                }
                return new Response(JSON.stringify(open), {status: 200});
            }
            if (url.includes("/api/ratings")) {
                if (server.failNextSubmit) {
                    server.failNextSubmit = false;
                    throw new TypeError("network drop");
                }
                if (server.rejectField) {
                    const field = server.rejectField;
                    server.rejectField = null;
                    return new Response(JSON.stringify({field, reason: "rejected by test"}), {status: 400});
                }
                const body = JSON.parse(String(init?.body));
                const key = `${body.transcript_id}|${body.rater_id}`;
                const status = server.ratings.has(key) ? "replaced" : "created";
                server.ratings.set(key, body);
                return new Response(JSON.stringify({status}), {status: 201});
            }
            return new Response("not found", {status: 404});
        },
    };
    return server;
}

function fillForm(root: HTMLElement): void {
    for (const metric of ["readability", "correctness", "human_likeness"]) {
        root.querySelector<HTMLInputElement>(`#${metric}-4`)!.click();
    }
    root.querySelector<HTMLInputElement>("#feeling-like")!.click();
}

async function settle(): Promise<void> {
    await new Promise((resolve) => setTimeout(resolve, 0));
}

describe("RatingApp", () => {
    let root: HTMLElement;

    beforeEach(() => {
        document.body.innerHTML = '<main id="app"></main>';
        root = document.getElementById("app")!;
    });

    it("renders all five pairs with questionable markers", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        const pairs = root.querySelectorAll(".pair");
        expect(pairs.length).toBe(5);
        expect(pairs[1].textContent).toContain("A: sphere?");
        expect(pairs[0].textContent).toContain("A: red");
        expect(pairs[4].textContent).toContain("Q: <empty>?");
        const marked = root.querySelectorAll(".questionable");
        expect(marked.length).toBe(2);
    });

    it("keeps submit disabled until the form is complete", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        const submit = root.querySelector<HTMLButtonElement>("#submit")!;
        expect(submit.disabled).toBe(true);
        await app.submit();
        expect(server.calls.filter((c) => c.startsWith("POST"))).toHaveLength(0);

        root.querySelector<HTMLInputElement>("#readability-3")!.click();
        root.querySelector<HTMLInputElement>("#correctness-3")!.click();
        expect(submit.disabled).toBe(true);
        root.querySelector<HTMLInputElement>("#human_likeness-3")!.click();
        expect(submit.disabled).toBe(true);
        root.querySelector<HTMLInputElement>("#feeling-amusing")!.click();
        expect(submit.disabled).toBe(false);
    });

    it("submits a complete form and advances to the next task", async () => {
        const server = fakeServer(2);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        expect(root.querySelector("#image-ref")!.textContent).toContain("img-0");
        fillForm(root);
        await app.submit();
        await settle();
        expect(server.ratings.size).toBe(1);
        expect(root.querySelector("#image-ref")!.textContent).toContain("img-1");
        // fresh form for the new task
        expect(root.querySelector<HTMLButtonElement>("#submit")!.disabled).toBe(true);
    });

    it("shows the completion screen when no tasks remain", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        fillForm(root);
        await app.submit();
        await settle();
        expect(root.querySelector("#all-done")).toBeTruthy();
    });

    it("highlights the field named by a server 400", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        fillForm(root);
        server.rejectField = "correctness";
        await app.submit();
        expect(root.querySelector("#group-correctness")!.classList.contains("invalid")).toBe(true);
        expect(root.querySelector("#form-status")!.textContent).toContain("correctness");
    });

    it("preserves form state across a network drop and allows retry", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        fillForm(root);
        const comment = root.querySelector<HTMLTextAreaElement>("#comment")!;
        comment.value = "kept across failures";
        comment.dispatchEvent(new Event("input"));

        server.failNextSubmit = true;
        await app.submit();
        expect(root.querySelector("#form-status")!.textContent).toContain("try again");
        // state preserved: same task, selections still checked, retry works
        expect(root.querySelector<HTMLInputElement>("#readability-4")!.checked).toBe(true);
        await app.submit();
        await settle();
        expect(server.ratings.size).toBe(1);
        expect([...server.ratings.values()][0].comment).toBe("kept across failures");
    });

    it("client-side validation rejects out-of-range scores without any network call", async () => {
        const server = fakeServer(1);
        const app = new RatingApp(root, new ApiClient("", server.fetch), "t");
        await app.start();
        const before = server.calls.filter((c) => c.startsWith("POST")).length;
        const form = (app as any).form;
        expect(() => form.setScore("readability", 6)).toThrow(/between 1 and 5/);
        expect(() => form.setScore("readability", 0)).toThrow(/between 1 and 5/);
        await app.submit(); // still incomplete, must not POST
        expect(server.calls.filter((c) => c.startsWith("POST")).length).toBe(before);
    });
});
