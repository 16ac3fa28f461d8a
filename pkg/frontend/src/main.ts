import {ApiClient} from "./api";
import {RatingForm} from "./form";
import {METRIC_TITLES, METRICS, MetricName, SCALE_ANCHORS, Task} from "./types";

const INTRO =
    "Imagine you have a companion robot that looks at a scene and talks to " +
    "itself: it asks questions about what it sees and then answers them. " +
    "Read the transcript below and rate the robot's performance.";

export class RatingApp {
    private task: Task | null = null;
    private form: RatingForm | null = null;
    private feelings: string[] = [];
    private inFlight = false;
    readonly raterId: string;

    constructor(
        private readonly root: HTMLElement,
        private readonly api: ApiClient,
        raterId?: string,
    ) {
        this.raterId = raterId ?? `rater-${Math.random().toString(36).slice(2, 10)}`;
    }

    async start(): Promise<void> {
        this.renderMessage("Loading…");
        try {
            this.feelings = await this.api.feelings();
            await this.advance();
        } catch (err) {
            this.renderRetry(`Could not reach the rating service: ${String(err)}`);
        }
    }

    async advance(): Promise<void> {
        try {
            this.task = await this.api.nextTask(this.raterId);
        } catch (err) {
            this.renderRetry(`Could not load the next task: ${String(err)}`);
            return;
        }
        if (this.task === null) {
            this.renderMessage("All done — no transcripts left to rate. Thank you!", "done");
            return;
        }
        this.form = new RatingForm(this.feelings);
        this.renderTask();
    }

    async submit(): Promise<void> {
        if (!this.task || !this.form || this.inFlight || !this.form.canSubmit()) {
            return;
        }
        this.inFlight = true;
        this.syncControls();
        try {
            const result = await this.api.submitRating(this.form.body(this.task.transcript_id, this.raterId));
            this.inFlight = false;
            if (result.kind === "rejected") {
                this.highlightField(result.error.field, result.error.reason);
                return;
            }
            await this.advance();
        } catch (err) {
            // network drop: keep the form state, offer a retry
            this.inFlight = false;
            this.syncControls();
            this.showStatus(`Submission failed (${String(err)}); your answers are kept — try again.`);
        }
    }

    // -- rendering ----------------------------------------------------------

    private renderMessage(text: string, cls = "status"): void {
        this.root.innerHTML = "";
        const p = this.el("p", cls, text);
        p.id = cls === "done" ? "all-done" : "app-status";
        this.root.appendChild(p);
    }

    private renderRetry(text: string): void {
        this.renderMessage(text);
        const button = this.el("button", "retry", "Retry");
        button.id = "retry";
        button.addEventListener("click", () => void this.start());
        this.root.appendChild(button);
    }

    private renderTask(): void {
        const task = this.task!;
        this.root.innerHTML = "";

        this.root.appendChild(this.el("p", "intro", INTRO));
        const header = this.el("div", "task-header");
        header.appendChild(this.el("h2", "", `Scene ${task.image_id}`));
        const image = this.el("p", "image-ref", `image: ${task.image_ref}`);
        image.id = "image-ref";
        header.appendChild(image);
        this.root.appendChild(header);

        const list = this.el("div", "pairs");
        list.id = "pairs";
        for (const pair of task.pairs) {
            const row = this.el("div", "pair");
            const question = pair.q === "" ? "<empty>" : pair.q;
            row.appendChild(this.el("span", "q", `Q: ${question}?`));
            const marked = pair.flag === "questionable" ? `${pair.a}?` : pair.a;
            const answer = this.el("span", pair.flag === "questionable" ? "a questionable" : "a", ` A: ${marked}`);
            row.appendChild(answer);
            list.appendChild(row);
        }
        this.root.appendChild(list);

        const formBox = this.el("form", "rating-form");
        formBox.addEventListener("submit", (event) => {
            event.preventDefault();
            void this.submit();
        });
        for (const metric of METRICS) {
            formBox.appendChild(this.scaleGroup(metric));
        }
        formBox.appendChild(this.feelingGroup());

        const commentLabel = this.el("label", "comment-label", "Comment (optional)");
        const comment = document.createElement("textarea");
        comment.id = "comment";
        comment.addEventListener("input", () => {
            this.form!.comment = comment.value;
        });
        commentLabel.appendChild(comment);
        formBox.appendChild(commentLabel);

        const submit = document.createElement("button");
        submit.type = "submit";
        submit.id = "submit";
        submit.textContent = "Submit rating";
        submit.disabled = true;
        formBox.appendChild(submit);

        const status = this.el("p", "form-status", "");
        status.id = "form-status";
        formBox.appendChild(status);

        this.root.appendChild(formBox);
    }

    private scaleGroup(metric: MetricName): HTMLElement {
        const box = this.el("fieldset", "scale");
        box.id = `group-${metric}`;
        const [low, high] = SCALE_ANCHORS[metric];
        box.appendChild(this.el("legend", "", METRIC_TITLES[metric]));
        box.appendChild(this.el("span", "anchor", `1 = ${low}`));
        for (let value = 1; value <= 5; value += 1) {
            const label = this.el("label", "score");
            const input = document.createElement("input");
            input.type = "radio";
            input.name = metric;
            input.value = String(value);
            input.id = `${metric}-${value}`;
            input.addEventListener("change", () => {
                this.form!.setScore(metric, value);
                this.clearHighlight(metric);
                this.syncControls();
            });
            label.appendChild(input);
            label.appendChild(document.createTextNode(String(value)));
            box.appendChild(label);
        }
        box.appendChild(this.el("span", "anchor", `5 = ${high}`));
        return box;
    }

    private feelingGroup(): HTMLElement {
        const box = this.el("fieldset", "feelings");
        box.id = "group-feeling";
        box.appendChild(this.el("legend", "", "Your immediate feeling"));
        for (const feeling of this.feelings) {
            const label = this.el("label", "feeling");
            const input = document.createElement("input");
            input.type = "radio";
            input.name = "feeling";
            input.value = feeling;
            input.id = `feeling-${feeling}`;
            input.addEventListener("change", () => {
                this.form!.setFeeling(feeling);
                this.clearHighlight("feeling");
                this.syncControls();
            });
            label.appendChild(input);
            label.appendChild(document.createTextNode(feeling));
            box.appendChild(label);
        }
        return box;
    }

    private syncControls(): void {
        const submit = this.root.querySelector<HTMLButtonElement>("#submit");
        if (submit) {
            submit.disabled = this.inFlight || !this.form || !this.form.canSubmit();
        }
    }

    private highlightField(field: string, reason: string): void {
        const group = this.root.querySelector(`#group-${field}`);
        if (group) {
            group.classList.add("invalid");
        }
        this.showStatus(`${field}: ${reason}`);
    }

    private clearHighlight(field: string): void {
        this.root.querySelector(`#group-${field}`)?.classList.remove("invalid");
    }

    private showStatus(text: string): void {
        const status = this.root.querySelector("#form-status");
        if (status) {
            status.textContent = text;
        }
    }

    private el(tag: string, cls: string, text?: string): HTMLElement {
        const node = document.createElement(tag);
        if (cls) {
            node.className = cls;
        }
        if (text !== undefined) {
            node.textContent = text;
        }
        return node;
    }
}

export function mount(root: HTMLElement, api = new ApiClient(), raterId?: string): RatingApp {
    const app = new RatingApp(root, api, raterId);
    void app.start();
    return app;
}
