export interface TranscriptPair {
    q: string;
    a: string;
    confidence: number;
    flag: "affirmative" | "questionable";
    q_log_prob: number;
    duplicate?: boolean;
}

export interface Task {
    transcript_id: string;
    dataset: string;
    image_id: string;
    image_ref: string;
    pairs: TranscriptPair[];
    text: string;
}

export interface RatingBody {
    transcript_id: string;
    rater_id: string;
    readability: number;
    correctness: number;
    human_likeness: number;
    feeling: string;
    comment: string;
}

export interface FieldError {
    field: string;
    reason: string;
}

export type MetricName = "readability" | "correctness" | "human_likeness";

export const METRICS: MetricName[] = ["readability", "correctness", "human_likeness"];

export const METRIC_TITLES: Record<MetricName, string> = {
    readability: "Readability",
    correctness: "Correctness",
    human_likeness: "Human likeness",
};

// anchor labels shown on the 1 and 5 ends of each scale
export const SCALE_ANCHORS: Record<MetricName, [string, string]> = {
    readability: ["not readable at all", "no grammatical errors"],
    correctness: ["not correct at all", "fully correct"],
    human_likeness: ["not human-like", "fully human-like"],
};
