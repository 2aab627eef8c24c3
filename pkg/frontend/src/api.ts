// Thin HTTP client over the tutoring service. Event posts retry with the
// same event id, so a flaky network can never double-apply an event.

import {
  EventAck,
  InboundEvent,
  InboundEventBody,
  NextMessage,
  SessionDescriptor,
  StudentModelSnapshot,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number, readonly detail?: unknown) {
    super(message);
  }
}

const POST_RETRIES = 3;

export class ApiClient {
  private counter = 0;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly idPrefix: string = `ui-${Date.now().toString(36)}`,
  ) {}

  nextEventId(): string {
    this.counter += 1;
    return `${this.idPrefix}-${this.counter}`;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const text = await response.text();
    let data: unknown = undefined;
    try {
      data = text ? JSON.parse(text) : undefined;
    } catch {
      data = text;
    }
    if (!response.ok) {
      throw new ApiError(`${path} -> ${response.status}`, response.status, data);
    }
    return data;
  }

  async health(): Promise<boolean> {
    try {
      await this.request("/health");
      return true;
    } catch {
      return false;
    }
  }

  async createSession(
    config: unknown,
    studentId: string,
    sessionId?: string,
  ): Promise<SessionDescriptor> {
    return (await this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        student_id: studentId,
        session_id: sessionId,
        config,
      }),
    })) as SessionDescriptor;
  }

  async nextMessage(sessionId: string): Promise<NextMessage> {
    return (await this.request(`/sessions/${sessionId}/message`)) as NextMessage;
  }

  /**
   * Post one learner event. Retries reuse the same event id; the service
   * treats a repeated id as a no-op ack carrying the original reply.
   */
  async postEvent(sessionId: string, body: InboundEventBody): Promise<EventAck> {
    const event: InboundEvent = { ...body, event_id: this.nextEventId() };
    let lastError: unknown = null;
    for (let attempt = 0; attempt < POST_RETRIES; attempt += 1) {
      try {
        return (await this.request(`/sessions/${sessionId}/events`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(event),
        })) as EventAck;
      } catch (error) {
        if (error instanceof ApiError) {
          throw error; // 4xx/5xx will not improve on retry
        }
        lastError = error; // network failure: idempotent re-post
      }
    }
    throw lastError instanceof Error
      ? lastError
      : new Error(`postEvent failed after ${POST_RETRIES} attempts`);
  }

  async studentModel(studentId: string): Promise<StudentModelSnapshot> {
    return (await this.request(`/students/${studentId}/model`)) as StudentModelSnapshot;
  }
}
