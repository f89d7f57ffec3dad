/**
 * The configurable pinned banner (the web stand-in for a permanent
 * notification) and its live preview. The preview is a pure function of
 * the selection and today's aggregates, so what you see is exactly what
 * the banner will show.
 */

import { DailyAggregatePayload } from "./api.js";
import { TILE_METRICS } from "./tiles.js";
import { KeyValueStore } from "./support.js";

const STORAGE_KEY = "sensediary.notification";
export const MAX_NOTIFICATION_METRICS = 3;

export interface NotificationConfig {
  metrics: string[]; // ordered subset of TILE_METRICS ids, length <= 3
}

export function defaultNotificationConfig(): NotificationConfig {
  return { metrics: ["usage_minutes", "unlock_count", "steps"] };
}

export function loadNotificationConfig(store: KeyValueStore): NotificationConfig {
  const raw = store.get(STORAGE_KEY);
  if (raw === null) return defaultNotificationConfig();
  return JSON.parse(raw) as NotificationConfig;
}

export function saveNotificationConfig(store: KeyValueStore, config: NotificationConfig): void {
  store.set(STORAGE_KEY, JSON.stringify(config));
}

export function toggleMetric(config: NotificationConfig, metric: string): NotificationConfig {
  if (config.metrics.includes(metric)) {
    return { metrics: config.metrics.filter((m) => m !== metric) };
  }
  if (config.metrics.length >= MAX_NOTIFICATION_METRICS) {
    return config; // selection is full; caller surfaces the limit
  }
  return { metrics: [...config.metrics, metric] };
}

/** The banner text: one segment per selected metric, selection order. */
export function notificationPreview(
  config: NotificationConfig,
  today: DailyAggregatePayload,
): string {
  const segments = config.metrics.map((metric) => {
    const spec = TILE_METRICS.find((s) => s.metric === metric);
    if (!spec) return metric;
    const value = spec.read(today);
    return `${spec.label} ${value}${spec.unit ? " " + spec.unit : ""}`;
  });
  return segments.join(" · ") || "No metrics selected";
}
