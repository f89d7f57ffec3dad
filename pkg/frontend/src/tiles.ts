/**
 * Dashboard tiles: today's value per metric with a tap-to-expand weekly
 * series. A tile whose source permission is missing shows the enable
 * action and no numbers at all.
 */

import { DailyAggregatePayload } from "./api.js";
import { escapeHtml } from "./support.js";

export type PermissionState = "granted" | "missing";

export interface TileModel {
  metric: string;
  label: string;
  unit: string;
  today: number;
  weekly: number[]; // 7 values, oldest first
  permissionState: PermissionState;
}

interface MetricSpec {
  metric: string;
  label: string;
  unit: string;
  source: string; // permission key
  read(day: DailyAggregatePayload): number;
}

export const TILE_METRICS: MetricSpec[] = [
  {
    metric: "usage_minutes",
    label: "Screen time",
    unit: "min",
    source: "phone_lock",
    read: (d) => Math.round(d.usage_seconds / 60),
  },
  {
    metric: "unlock_count",
    label: "Unlocks",
    unit: "",
    source: "phone_lock",
    read: (d) => d.unlock_count,
  },
  {
    metric: "locations",
    label: "Places visited",
    unit: "",
    source: "location",
    read: (d) => d.distinct_location_cells,
  },
  {
    metric: "steps",
    label: "Steps",
    unit: "",
    source: "steps",
    read: (d) => d.steps_total,
  },
  {
    metric: "notifications",
    label: "Notifications",
    unit: "",
    source: "notification_meta",
    read: (d) => Object.values(d.notifications_per_app).reduce((a, b) => a + b, 0),
  },
  {
    metric: "photos",
    label: "Photos taken",
    unit: "",
    source: "photo_meta",
    read: (d) => d.photos_count,
  },
  {
    metric: "music",
    label: "Tracks played",
    unit: "",
    source: "music_meta",
    read: (d) => d.music_play_count,
  },
];

/**
 * Build tile models from a 7-day aggregate window (oldest first; the
 * last entry is today) and the per-source permission map.
 */
export function buildTiles(
  week: DailyAggregatePayload[],
  permissions: Record<string, boolean>,
): TileModel[] {
  if (week.length !== 7) throw new Error(`expected 7 days, got ${week.length}`);
  return TILE_METRICS.map((spec) => {
    const granted = permissions[spec.source] ?? true;
    return {
      metric: spec.metric,
      label: spec.label,
      unit: spec.unit,
      today: granted ? spec.read(week[6]) : 0,
      weekly: granted ? week.map(spec.read) : [],
      permissionState: granted ? "granted" : "missing",
    };
  });
}

/** Render one tile; expanded shows the weekly series. Pure string HTML. */
export function renderTile(tile: TileModel, expanded: boolean, stale = false): string {
  const classes = `tile${expanded ? " tile-expanded" : ""}`;
  if (tile.permissionState === "missing") {
    return (
      `<div class="${classes} tile-blocked" data-metric="${tile.metric}">` +
      `<h3>${escapeHtml(tile.label)}</h3>` +
      `<button class="grant-permission" data-source-metric="${tile.metric}">Grant permission</button>` +
      `</div>`
    );
  }
  const staleBadge = stale ? `<span class="stale-badge">stale data</span>` : "";
  const todayLine = `<p class="tile-value">${tile.today}${tile.unit ? " " + tile.unit : ""}</p>`;
  let weekly = "";
  if (expanded) {
    const max = Math.max(1, ...tile.weekly);
    const bars = tile.weekly
      .map(
        (value) =>
          `<div class="bar" style="height:${Math.round((value / max) * 100)}%" title="${value}"></div>`,
      )
      .join("");
    weekly = `<div class="weekly-bars">${bars}</div>`;
  }
  return (
    `<div class="${classes}" data-metric="${tile.metric}">` +
    `<h3>${escapeHtml(tile.label)}</h3>${staleBadge}${todayLine}${weekly}` +
    `</div>`
  );
}

/** Results tile: personality scores become visible once a session is done. */
export function renderResultsTile(scores: Record<string, number> | null): string {
  if (scores === null) {
    return (
      `<div class="tile tile-results" data-metric="results">` +
      `<h3>Your results</h3><p>Finish today's questionnaire to see your scores.</p></div>`
    );
  }
  const rows = Object.entries(scores)
    .map(([name, value]) => `<li>${escapeHtml(name)}: ${value.toFixed(1)} / 5</li>`)
    .join("");
  return `<div class="tile tile-results" data-metric="results"><h3>Your results</h3><ul>${rows}</ul></div>`;
}
