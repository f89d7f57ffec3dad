/**
 * Typed client for the study service endpoints.
 *
 * Identifier discipline is structural: participant calls take the token,
 * device calls take the pseudonym, and no method signature accepts both,
 * so a request mixing the two cannot be constructed here.
 */

import { QuestionnaireDef, parseQuestionnaire } from "./questionnaire.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface DailyAggregatePayload {
  day: string;
  usage_seconds: number;
  unlock_count: number;
  distinct_location_cells: number;
  steps_total: number;
  notifications_per_app: Record<string, number>;
  photos_count: number;
  music_play_count: number;
}

export class AlreadyReportedError extends Error {
  constructor(public participationCode: string | null) {
    super("completion already reported");
    this.name = "AlreadyReportedError";
  }
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class ServiceApi {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async json(response: Response): Promise<Record<string, unknown>> {
    const text = await response.text();
    try {
      return text ? JSON.parse(text) : {};
    } catch {
      return {};
    }
  }

  async latestQuestionnaire(ifVersion?: number): Promise<QuestionnaireDef | "not-modified"> {
    const headers: Record<string, string> = {};
    if (ifVersion !== undefined) headers["if-version"] = String(ifVersion);
    const response = await this.fetchFn(`${this.baseUrl}/v1/questionnaires/latest`, { headers });
    if (response.status === 304) return "not-modified";
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return parseQuestionnaire(await response.text());
  }

  async signup(email: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/participants`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ email }),
    });
    const body = await this.json(response);
    if (response.status !== 201) {
      throw new ApiError(response.status, String(body.error ?? "signup failed"));
    }
    return body.participant_token as string;
  }

  async reportCompletion(
    participantToken: string,
    metThreshold: boolean,
  ): Promise<string | null> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/participants/completion`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ participant_token: participantToken, met_threshold: metThreshold }),
    });
    const body = await this.json(response);
    if (response.status === 409) {
      throw new AlreadyReportedError((body.participation_code as string | null) ?? null);
    }
    if (!response.ok) throw new ApiError(response.status, String(body.error ?? "report failed"));
    return (body.participation_code as string | null) ?? null;
  }

  async aggregates(
    pseudonym: string,
    startIso: string,
    endIso: string,
  ): Promise<DailyAggregatePayload[]> {
    const url =
      `${this.baseUrl}/v1/devices/${pseudonym}/aggregates?start=${startIso}&end=${endIso}`;
    const response = await this.fetchFn(url);
    if (!response.ok) throw new ApiError(response.status, await response.text());
    const body = await this.json(response);
    return body.days as DailyAggregatePayload[];
  }
}
