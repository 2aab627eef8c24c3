import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { ChatApp } from "../src/app.js";
import {
  EventAck,
  InboundEventBody,
  NextMessage,
  OutboundEnvelope,
} from "../src/types.js";
import { RenderedWidget } from "../src/widgets.js";

function textMsg(body: string, needResponse = false): OutboundEnvelope {
  return { type: "text", body, need_response: needResponse };
}

class FakeApi {
  messages: NextMessage[];
  events: Array<InboundEventBody & { event_id: string }> = [];
  acks: EventAck[] = [];
  private counter = 0;

  constructor(messages: NextMessage[]) {
    this.messages = [...messages];
  }

  nextEventId(): string {
    this.counter += 1;
    return `fake-${this.counter}`;
  }

  async createSession() {
    return { session_id: "s1", student_id: "stu", status: "active" };
  }

  async nextMessage(): Promise<NextMessage> {
    if (!this.messages.length) return { done: true };
    return this.messages.shift()!;
  }

  async postEvent(_sid: string, body: InboundEventBody): Promise<EventAck> {
    const event = { ...body, event_id: this.nextEventId() };
    this.events.push(event);
    const ack = this.acks.shift() ?? { ok: true, event_id: event.event_id };
    return { ...ack, event_id: event.event_id };
  }

  async studentModel() {
    return { student_id: "stu", components: [] };
  }
}

function makeApp(api: FakeApi, onWidget?: (w: RenderedWidget) => void) {
  const container = document.createElement("div");
  document.body.appendChild(container);
  return new ChatApp(container, api as unknown as ApiClient, { onWidget });
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("ChatApp", () => {
  it("pumps non-blocking messages straight through to done", async () => {
    const api = new FakeApi([textMsg("one"), textMsg("two"), { done: true }]);
    const app = makeApp(api);
    await app.start({}, "stu");
    const bodies = [...app.messagesEl.querySelectorAll(".vt-body")]
      .map((n) => n.textContent);
    expect(bodies).toEqual(["one", "two"]);
    expect(app.done).toBe(true);
    expect(app.invariantViolations).toBe(0);
  });

  it("blocks on a need_response message until the widget resolves", async () => {
    const api = new FakeApi([
      { type: "multiple_choice", body: "pick", need_response: true,
        options: ["A) x", "B) y"] },
      textMsg("after"),
      { done: true },
    ]);
    const clicks: RenderedWidget[] = [];
    const app = makeApp(api, (widget) => {
      if (widget.envelope.need_response) clicks.push(widget);
    });
    const run = app.start({}, "stu");

    // allow the pump to deliver the blocking widget
    await vi.waitFor(() => expect(clicks.length).toBe(1));
    expect(app.pending).toBe(true);
    expect(app.goOnButton.disabled).toBe(true);

    clicks[0].root.querySelector<HTMLButtonElement>(".vt-option")!.click();
    await run;
    expect(api.events).toEqual([
      { type: "student_response", choice: "A", event_id: "fake-1" },
    ]);
    expect(app.pending).toBe(false);
    expect(app.done).toBe(true);
    expect(app.invariantViolations).toBe(0);
  });

  it("renders immediate ack replies exactly once, skipping duplicates", async () => {
    const api = new FakeApi([{ done: true }]);
    const app = makeApp(api);
    await app.start({}, "stu");

    api.acks.push({ ok: true, event_id: "x", reply: textMsg("feedback!") });
    await app.submitEvent({ type: "student_response", text: "hi" });
    api.acks.push({ ok: true, event_id: "x", duplicate: true,
                    reply: textMsg("feedback!") });
    await app.submitEvent({ type: "student_response", text: "hi" });

    const bodies = [...app.messagesEl.querySelectorAll(".vt-body")]
      .map((n) => n.textContent);
    expect(bodies.filter((b) => b === "feedback!")).toHaveLength(1);
  });

  it("flags an invariant violation if a second blocking widget would render", async () => {
    const api = new FakeApi([{ done: true }]);
    const app = makeApp(api);
    await app.start({}, "stu");
    app.renderEnvelope(textMsg("q1", true), true);
    expect(app.pending).toBe(true);
    app.renderEnvelope(textMsg("q2", true), true);
    expect(app.invariantViolations).toBe(1);
  });

  it("asks questions through the controls and renders the reply", async () => {
    const api = new FakeApi([{ done: true }]);
    const app = makeApp(api);
    await app.start({}, "stu");
    api.acks.push({ ok: true, event_id: "x", reply: textMsg("an answer") });
    app.questionInput.value = "why?";
    app.askButton.click();
    await vi.waitFor(() => {
      const bodies = [...app.messagesEl.querySelectorAll(".vt-body")]
        .map((n) => n.textContent);
      expect(bodies).toContain("an answer");
    });
    expect(api.events[0]).toMatchObject({ type: "question", text: "why?" });
    // the learner's own line is rendered too
    expect([...app.messagesEl.querySelectorAll(".vt-student")]).toHaveLength(1);
  });

  it("go_on is a no-op while a widget is pending", async () => {
    const api = new FakeApi([{ done: true }]);
    const app = makeApp(api);
    await app.start({}, "stu");
    app.done = false;
    app.renderEnvelope(textMsg("blocking", true), true);
    await app.goOn();
    expect(api.events).toHaveLength(0);
  });
});

describe("ApiClient", () => {
  it("issues unique event ids and retries network failures with the same id", async () => {
    const seen: Array<{ url: string; body: string }> = [];
    let failures = 1;
    const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
      if (url.endsWith("/events") && failures > 0) {
        failures -= 1;
        throw new TypeError("network down");
      }
      seen.push({ url, body: String(init?.body ?? "") });
      return new Response(JSON.stringify({ ok: true, event_id: "e" }), {
        status: 200, headers: { "content-type": "application/json" },
      });
    };
    const api = new ApiClient("http://test", fetchImpl, "t");
    const ack = await api.postEvent("s1", { type: "go_on" });
    expect(ack.ok).toBe(true);
    expect(seen).toHaveLength(1);
    expect(JSON.parse(seen[0].body).event_id).toBe("t-1");

    await api.postEvent("s1", { type: "go_on" });
    expect(JSON.parse(seen[1].body).event_id).toBe("t-2");
  });

  it("does not retry HTTP-level errors", async () => {
    let calls = 0;
    const fetchImpl = async (): Promise<Response> => {
      calls += 1;
      return new Response(JSON.stringify({ detail: "phase violation" }), { status: 409 });
    };
    const api = new ApiClient("http://test", fetchImpl);
    await expect(api.postEvent("s1", { type: "go_on" })).rejects.toMatchObject({
      status: 409,
    });
    expect(calls).toBe(1);
  });
});
