import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import { makeFinding, mockGateway } from "./mockGateway.js";

function seeded() {
  const gw = mockGateway([
    makeFinding({ id: "j0000:F0000", cls: "void", volume_id: "vA" }),
    makeFinding({ id: "j0000:F0001", cls: "manhole", volume_id: "vA" }),
    makeFinding({ id: "j0001:F0000", cls: "loose", volume_id: "vB" }),
  ]);
  const api = new ApiClient("", gw.fetch);
  const session = new ReviewSession(api);
  return { gw, api, session };
}

describe("review loop", () => {
  it("verdicts update the gateway report counts", async () => {
    const { gw, api, session } = seeded();
    await session.load();
    expect(gw.report().by_review["pending"]).toBe(3);

    await session.submit("j0000:F0000", "confirm");
    await session.submit("j0000:F0001", "reject");
    await session.submit("j0001:F0000", "reclassify", "void");

    const report = await api.getReport();
    expect(report.by_review).toMatchObject({
      pending: 0,
      confirmed: 1,
      rejected: 1,
      reclassified: 1,
    });
  });

  it("advances through pending findings in order, wrapping", async () => {
    const { session } = seeded();
    await session.load();
    expect(session.nextPending()?.id).toBe("j0000:F0000");
    expect(session.nextPending("j0000:F0000")?.id).toBe("j0000:F0001");
    expect(session.nextPending("j0001:F0000")?.id).toBe("j0000:F0000");

    await session.submit("j0000:F0001", "confirm");
    expect(session.nextPending("j0000:F0000")?.id).toBe("j0001:F0000");
  });

  it("repeating the same verdict is a no-op and sends nothing", async () => {
    const { gw, session } = seeded();
    await session.load();
    await session.submit("j0000:F0000", "confirm");
    const posts = () => gw.requestLog.filter((r) => r.startsWith("POST")).length;
    const before = posts();

    const again = await session.submit("j0000:F0000", "confirm");
    expect(again).toEqual({ ok: true });
    expect(posts()).toBe(before);
  });

  it("changing a verdict re-posts and the gateway follows", async () => {
    const { gw, session } = seeded();
    await session.load();
    await session.submit("j0000:F0000", "confirm");
    await session.submit("j0000:F0000", "reject");
    expect(gw.findings[0].review).toBe("rejected");
    expect(gw.report().by_review["rejected"]).toBe(1);
  });
});

describe("failure handling", () => {
  it("rolls back the optimistic update when the gateway refuses", async () => {
    const { session } = seeded();
    await session.load();
    const out = await session.submit("j0000:F0000", "reclassify"); // missing class
    expect(out.ok).toBe(false);
    expect(out.error).toMatch(/corrected_class/);
    expect(session.get("j0000:F0000")?.review).toBe("pending");
  });

  it("keeps the optimistic state and queues a retry on network failure", async () => {
    const { gw, session } = seeded();
    await session.load();
    gw.offline = true;

    const out = await session.submit("j0000:F0000", "confirm");
    expect(out).toEqual({ ok: true, queued: true });
    expect(session.get("j0000:F0000")?.review).toBe("confirmed");
    expect(session.queuedRetries()).toHaveLength(1);
    expect(gw.findings[0].review).toBe("pending");

    gw.offline = false;
    await session.flushRetries();
    expect(session.queuedRetries()).toHaveLength(0);
    expect(gw.findings[0].review).toBe("confirmed");
  });

  it("requeues when the retry itself hits a dead network", async () => {
    const { gw, session } = seeded();
    await session.load();
    gw.offline = true;
    await session.submit("j0000:F0000", "confirm");
    await session.flushRetries();
    expect(session.queuedRetries()).toHaveLength(1);
  });
});
