// In-process stand-in for the annotation service, replaying responses
// recorded from the real HTTP endpoints (fixtures/recorded.json). Queue
// semantics (no-repeat, duplicate rejection, completion at five answers)
// are reproduced so the client can be driven through a full round trip.

import { createServer, type Server } from "node:http";
import { readFileSync } from "node:fs";

const recorded = JSON.parse(
  readFileSync(new URL("./fixtures/recorded.json", import.meta.url), "utf8"),
);

const SURVEY = recorded.next_ok.body;
const QUALIFIED = new Set(["w1", "w2", "w3", "w4", "w5"]);

export interface Fixture {
  baseUrl: string;
  close(): Promise<void>;
}

export function recordedResponses() {
  return recorded;
}

export async function startFixtureServer(): Promise<Fixture> {
  const answered = new Set<string>();
  let completed = false;

  const server: Server = createServer((req, res) => {
    const url = new URL(req.url ?? "/", "http://localhost");
    const sendJson = (status: number, body: unknown) => {
      res.writeHead(status, { "Content-Type": "application/json" });
      res.end(JSON.stringify(body));
    };

    if (req.method === "GET" && url.pathname === "/api/surveys/next") {
      const annotator = url.searchParams.get("annotator") ?? "";
      if (!QUALIFIED.has(annotator)) {
        return sendJson(403, recorded.next_unqualified.body);
      }
      if (completed || answered.has(annotator)) {
        res.writeHead(204, { "Retry-After": recorded.next_empty.headers["Retry-After"] });
        return res.end();
      }
      return sendJson(200, { ...SURVEY, answered: answered.size });
    }

    if (req.method === "POST" && url.pathname.startsWith("/api/surveys/")) {
      const surveyId = decodeURIComponent(url.pathname.split("/")[3] ?? "");
      let raw = "";
      req.on("data", (chunk) => (raw += chunk));
      req.on("end", () => {
        const body = JSON.parse(raw || "{}");
        const annotator: string = body.annotator ?? "";
        const answers: Record<string, string> = body.answers ?? {};
        if (!QUALIFIED.has(annotator)) {
          return sendJson(403, recorded.next_unqualified.body);
        }
        if (surveyId !== SURVEY.survey_id) {
          return sendJson(400, recorded.submit_unknown.body);
        }
        if (completed) return sendJson(409, recorded.submit_completed.body);
        if (answered.has(annotator)) return sendJson(409, recorded.submit_duplicate.body);
        for (const q of SURVEY.questions) {
          if (!q.options.includes(answers[q.id])) {
            return sendJson(400, recorded.submit_invalid.body);
          }
        }
        answered.add(annotator);
        completed = answered.size >= SURVEY.needed;
        return sendJson(200, { status: "accepted", completed });
      });
      return;
    }

    if (req.method === "GET" && url.pathname === "/api/metrics") {
      return sendJson(200, completed ? recorded.metrics.body : {
        ...recorded.metrics.body,
        pending: answered.size === 0 ? 1 : 0,
        in_flight: answered.size > 0 && !completed ? 1 : 0,
        completed: 0,
      });
    }

    if (req.method === "GET" && url.pathname.startsWith("/api/segments/")) {
      const segmentId = decodeURIComponent(url.pathname.slice("/api/segments/".length));
      if (segmentId === SURVEY.segment.id) {
        return sendJson(200, recorded.segment_ok.body);
      }
      return sendJson(404, recorded.segment_missing.body);
    }

    sendJson(404, { detail: "not found" });
  });

  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const address = server.address();
  if (address === null || typeof address === "string") throw new Error("no port");
  return {
    baseUrl: `http://127.0.0.1:${address.port}`,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}
