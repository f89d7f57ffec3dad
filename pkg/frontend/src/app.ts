/**
 * DOM glue: a small hash-routed single-page client over the view models.
 * All data access goes through the consent-guarded fetch; the pinned
 * banner, tiles, wizard, and completion flow render into #app.
 */

import { DailyAggregatePayload, ServiceApi } from "./api.js";
import { CompletionFlow, StudyWindow, completionButtonVisible } from "./completion.js";
import { ConsentGate, POLICY_TEXT, consentGuardedFetch } from "./consent.js";
import {
  MAX_NOTIFICATION_METRICS,
  loadNotificationConfig,
  notificationPreview,
  saveNotificationConfig,
  toggleMetric,
} from "./notification.js";
import { QuestionnaireDef, scoreScales } from "./questionnaire.js";
import { TILE_METRICS, buildTiles, renderResultsTile, renderTile } from "./tiles.js";
import { browserStore, escapeHtml, systemClock } from "./support.js";
import { Wizard } from "./wizard.js";

interface AppConfig {
  serviceUrl: string;
  pseudonym: string; // this browser profile's device pseudonym
  permissions: Record<string, boolean>;
  study: StudyWindow;
}

function appConfig(): AppConfig {
  const params = new URLSearchParams(window.location.search);
  const stored = window.localStorage.getItem("sensediary.app_config");
  const fallback: AppConfig = {
    serviceUrl: params.get("service") ?? "http://127.0.0.1:8040",
    pseudonym: params.get("pseudonym") ?? "",
    permissions: {},
    study: { startDateIso: "2024-01-01", lengthDays: 28, threshold: 0.8 },
  };
  if (stored === null) return fallback;
  return { ...fallback, ...JSON.parse(stored) };
}

const store = browserStore();
const clock = systemClock;
const config = appConfig();
const gate = new ConsentGate(store, clock);
const guardedFetch = consentGuardedFetch(gate, (url, init) => fetch(url, init));
const api = new ServiceApi(config.serviceUrl, guardedFetch);

let cachedWeek: DailyAggregatePayload[] | null = null;
let cachedDef: QuestionnaireDef | null = null;
let expandedMetric: string | null = null;
let staleData = false;

function el(): HTMLElement {
  return document.getElementById("app")!;
}

function todayIso(): string {
  return new Date(clock.nowMs()).toISOString().slice(0, 10);
}

function isoDaysAgo(days: number): string {
  return new Date(clock.nowMs() - days * 86_400_000).toISOString().slice(0, 10);
}

function emptyDay(day: string): DailyAggregatePayload {
  return {
    day,
    usage_seconds: 0,
    unlock_count: 0,
    distinct_location_cells: 0,
    steps_total: 0,
    notifications_per_app: {},
    photos_count: 0,
    music_play_count: 0,
  };
}

async function loadWeek(): Promise<DailyAggregatePayload[]> {
  if (!config.pseudonym) {
    staleData = false;
    return Array.from({ length: 7 }, (_v, i) => emptyDay(isoDaysAgo(6 - i)));
  }
  try {
    const days = await api.aggregates(config.pseudonym, isoDaysAgo(6), todayIso());
    cachedWeek = days;
    staleData = false;
    return days;
  } catch {
    staleData = true; // keep whatever we had; badge the tiles
    return cachedWeek ?? Array.from({ length: 7 }, (_v, i) => emptyDay(isoDaysAgo(6 - i)));
  }
}

function renderBanner(week: DailyAggregatePayload[]): string {
  const notification = loadNotificationConfig(store);
  const preview = notificationPreview(notification, week[6]);
  return `<div id="pinned-banner" class="banner">${escapeHtml(preview)}</div>`;
}

function renderNav(): string {
  return (
    `<nav>` +
    `<a href="#/dashboard">Dashboard</a> ` +
    `<a href="#/questionnaire">Daily questionnaire</a> ` +
    `<a href="#/notification">Notification</a> ` +
    (completionButtonVisible(config.study, clock)
      ? `<a href="#/completion">Study completion</a> `
      : "") +
    `</nav>`
  );
}

function renderConsent(): void {
  el().innerHTML =
    `<section class="consent">` +
    `<h2>Terms and privacy policy</h2>` +
    `<pre class="policy">${escapeHtml(POLICY_TEXT)}</pre>` +
    `<button id="consent-accept">I agree, start collecting</button>` +
    `<button id="consent-decline">Decline</button>` +
    `</section>`;
  document.getElementById("consent-accept")!.addEventListener("click", () => {
    gate.accept();
    window.location.hash = "#/dashboard";
    render();
  });
  document.getElementById("consent-decline")!.addEventListener("click", () => {
    gate.decline();
    render();
  });
}

function renderDeclined(): void {
  el().innerHTML =
    `<section class="disabled">` +
    `<h2>Data collection is off</h2>` +
    `<p>You declined the policy, so every data view is disabled and no` +
    ` requests are sent. You can accept below to participate.</p>` +
    `<button id="consent-accept">Review policy</button>` +
    `</section>`;
  document.getElementById("consent-accept")!.addEventListener("click", () => {
    store.remove("sensediary.consent");
    render();
  });
}

async function renderDashboard(): Promise<void> {
  const week = await loadWeek();
  const tiles = buildTiles(week, config.permissions);
  const scoresRaw = store.get(`sensediary.results.${todayIso()}`);
  const scores = scoresRaw ? (JSON.parse(scoresRaw) as Record<string, number>) : null;
  el().innerHTML =
    renderBanner(week) +
    renderNav() +
    `<section class="tiles">` +
    tiles.map((t) => renderTile(t, t.metric === expandedMetric, staleData)).join("") +
    renderResultsTile(scores) +
    `</section>`;
  for (const tileEl of Array.from(el().querySelectorAll(".tile:not(.tile-blocked)"))) {
    tileEl.addEventListener("click", () => {
      const metric = (tileEl as HTMLElement).dataset.metric!;
      expandedMetric = expandedMetric === metric ? null : metric;
      void renderDashboard();
    });
  }
}

async function loadDef(): Promise<QuestionnaireDef> {
  if (cachedDef !== null) {
    const refreshed = await api.latestQuestionnaire(cachedDef.version);
    if (refreshed !== "not-modified") cachedDef = refreshed;
  } else {
    cachedDef = (await api.latestQuestionnaire()) as QuestionnaireDef;
  }
  return cachedDef;
}

async function renderWizard(): Promise<void> {
  const def = await loadDef();
  const wizard = new Wizard(def, store, clock, todayIso());
  const paint = (): void => {
    const screen = wizard.screen();
    const percent = Math.round(screen.progress * 100);
    const bar =
      `<div class="progress"><div class="progress-fill" style="width:${percent}%"></div>` +
      `<span>${percent}%</span></div>`;
    if (screen.item === null) {
      const scores = scoreScales(wizard.session, def);
      store.set(`sensediary.results.${todayIso()}`, JSON.stringify(scores));
      const dates = JSON.parse(store.get("sensediary.completed_dates") ?? "[]") as string[];
      if (!dates.includes(todayIso())) {
        dates.push(todayIso());
        store.set("sensediary.completed_dates", JSON.stringify(dates));
      }
      el().innerHTML =
        renderNav() + bar + `<p>Done for today. Your results tile is ready.</p>` +
        `<a href="#/dashboard">See results</a>`;
      return;
    }
    const item = screen.item;
    let controls = "";
    if (item.kind === "likert5") {
      controls = [1, 2, 3, 4, 5]
        .map((v) => `<button class="likert" data-value="${v}">${v}</button>`)
        .join("");
    } else if (item.kind === "single_choice") {
      controls = item.options
        .map((o) => `<button class="choice" data-value="${escapeHtml(o)}">${escapeHtml(o)}</button>`)
        .join("");
    } else {
      controls =
        `<textarea id="free-text"></textarea>` +
        `<button class="submit-text">Continue</button>`;
    }
    el().innerHTML =
      renderNav() +
      bar +
      `<section class="wizard-screen" data-item-id="${escapeHtml(item.id)}">` +
      `<h2>Question ${screen.index + 1} of ${screen.total}</h2>` +
      `<p class="prompt">${escapeHtml(item.prompt)}</p>` +
      `<div class="controls">${controls}</div>` +
      `<button id="wizard-back" ${screen.index === 0 ? "disabled" : ""}>Back</button>` +
      `</section>`;
    const record = (value: number | string): void => {
      const problem = wizard.answer(value);
      if (problem === null) paint();
    };
    for (const button of Array.from(el().querySelectorAll(".likert"))) {
      button.addEventListener("click", () =>
        record(Number((button as HTMLElement).dataset.value)),
      );
    }
    for (const button of Array.from(el().querySelectorAll(".choice"))) {
      button.addEventListener("click", () =>
        record((button as HTMLElement).dataset.value!),
      );
    }
    el().querySelector(".submit-text")?.addEventListener("click", () => {
      const text = (document.getElementById("free-text") as HTMLTextAreaElement).value;
      record(text);
    });
    document.getElementById("wizard-back")!.addEventListener("click", () => {
      wizard.back();
      paint();
    });
  };
  paint();
}

function renderNotificationConfig(): void {
  const notification = loadNotificationConfig(store);
  const week = cachedWeek ?? Array.from({ length: 7 }, (_v, i) => emptyDay(isoDaysAgo(6 - i)));
  const checkboxes = TILE_METRICS.map((spec) => {
    const checked = notification.metrics.includes(spec.metric) ? "checked" : "";
    return (
      `<label><input type="checkbox" data-metric="${spec.metric}" ${checked}>` +
      `${escapeHtml(spec.label)}</label>`
    );
  }).join("<br>");
  el().innerHTML =
    renderNav() +
    `<section class="notification-config">` +
    `<h2>Configure the pinned banner (up to ${MAX_NOTIFICATION_METRICS} metrics)</h2>` +
    `<form id="metric-form">${checkboxes}</form>` +
    `<h3>Preview</h3>` +
    `<div id="preview" class="banner">${escapeHtml(
      notificationPreview(notification, week[6]),
    )}</div>` +
    `</section>`;
  for (const box of Array.from(el().querySelectorAll("input[type=checkbox]"))) {
    box.addEventListener("change", () => {
      const metric = (box as HTMLElement).dataset.metric!;
      const updated = toggleMetric(loadNotificationConfig(store), metric);
      saveNotificationConfig(store, updated);
      renderNotificationConfig(); // preview always reflects the selection
    });
  }
}

async function renderCompletion(): Promise<void> {
  const flow = new CompletionFlow(api, config.study, store);
  const token = store.get("sensediary.participant_token");
  const dates = JSON.parse(store.get("sensediary.completed_dates") ?? "[]") as string[];
  if (token === null) {
    el().innerHTML =
      renderNav() +
      `<section><h2>Study completion</h2>` +
      `<p>Sign up first:</p>` +
      `<input id="email" placeholder="you@example.org">` +
      `<button id="signup">Sign up</button></section>`;
    document.getElementById("signup")!.addEventListener("click", async () => {
      const email = (document.getElementById("email") as HTMLInputElement).value;
      const fresh = await api.signup(email);
      store.set("sensediary.participant_token", fresh);
      void renderCompletion();
    });
    return;
  }
  const outcome = await flow.run(token, dates);
  if (outcome.kind === "code") {
    el().innerHTML =
      renderNav() +
      `<section><h2>Thank you!</h2>` +
      `<p>Compliance rate: ${(outcome.rate * 100).toFixed(1)}%</p>` +
      `<p>Your participation code:</p>` +
      `<code id="participation-code">${escapeHtml(outcome.code)}</code>` +
      `<button id="copy-code">Copy</button></section>`;
    document.getElementById("copy-code")!.addEventListener("click", () => {
      void navigator.clipboard.writeText(outcome.code);
    });
  } else {
    el().innerHTML =
      renderNav() +
      `<section><h2>Not eligible</h2>` +
      `<p>Your completion rate was ${(outcome.rate * 100).toFixed(1)}%, below the` +
      ` required ${(config.study.threshold * 100).toFixed(0)}%.</p></section>`;
  }
}

export function render(): void {
  const status = gate.status();
  if (status === "absent") {
    renderConsent();
    return;
  }
  if (status === "declined") {
    renderDeclined();
    return;
  }
  const route = window.location.hash || "#/dashboard";
  if (route.startsWith("#/questionnaire")) void renderWizard();
  else if (route.startsWith("#/notification")) renderNotificationConfig();
  else if (route.startsWith("#/completion")) void renderCompletion();
  else void renderDashboard();
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("app")) {
  window.addEventListener("hashchange", render);
  render();
}
