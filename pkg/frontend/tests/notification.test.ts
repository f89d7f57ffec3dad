import { describe, expect, it } from "vitest";

import { DailyAggregatePayload } from "../src/api.js";
import {
  MAX_NOTIFICATION_METRICS,
  defaultNotificationConfig,
  loadNotificationConfig,
  notificationPreview,
  saveNotificationConfig,
  toggleMetric,
} from "../src/notification.js";
import { MemoryStore } from "../src/support.js";

const TODAY: DailyAggregatePayload = {
  day: "2024-01-07",
  usage_seconds: 2520,
  unlock_count: 31,
  distinct_location_cells: 5,
  steps_total: 8421,
  notifications_per_app: { a: 4 },
  photos_count: 2,
  music_play_count: 9,
};

describe("notification configurator", () => {
  it("preview reflects the current selection exactly, in order", () => {
    const preview = notificationPreview({ metrics: ["usage_minutes", "steps"] }, TODAY);
    expect(preview).toBe("Screen time 42 min · Steps 8421");
    const reordered = notificationPreview({ metrics: ["steps", "usage_minutes"] }, TODAY);
    expect(reordered).toBe("Steps 8421 · Screen time 42 min");
  });

  it("preview is a pure function of config and aggregates", () => {
    const config = { metrics: ["unlock_count"] };
    expect(notificationPreview(config, TODAY)).toBe(notificationPreview(config, TODAY));
    const otherDay = { ...TODAY, unlock_count: 2 };
    expect(notificationPreview(config, otherDay)).toBe("Unlocks 2");
  });

  it("selection is capped at three metrics", () => {
    let config = { metrics: [] as string[] };
    for (const metric of ["usage_minutes", "steps", "photos", "music"]) {
      config = toggleMetric(config, metric);
    }
    expect(config.metrics).toHaveLength(MAX_NOTIFICATION_METRICS);
    expect(config.metrics).toEqual(["usage_minutes", "steps", "photos"]);
  });

  it("toggle removes an already-selected metric", () => {
    let config = { metrics: ["steps", "photos"] };
    config = toggleMetric(config, "steps");
    expect(config.metrics).toEqual(["photos"]);
  });

  it("empty selection previews a hint instead of an empty string", () => {
    expect(notificationPreview({ metrics: [] }, TODAY)).toBe("No metrics selected");
  });

  it("round-trips through storage with a sensible default", () => {
    const store = new MemoryStore();
    expect(loadNotificationConfig(store)).toEqual(defaultNotificationConfig());
    saveNotificationConfig(store, { metrics: ["photos"] });
    expect(loadNotificationConfig(store)).toEqual({ metrics: ["photos"] });
  });
});
