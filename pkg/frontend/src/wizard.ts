// Guided labeling: the draft lives entirely in memory until the operator
// finishes, so abandoning mid-wizard leaves the registry untouched. On
// finish the labels post in dependency order; the first server refusal
// stops the sequence and is surfaced inline.

import { ApiClient, ApiError } from "./api.js";

export interface SensorDraft {
  barcode: number | null;
  sensorType: string;
  depthCm: number;
  multiplexer: number | null;
  channel: number | null;
}

export interface WizardDraft {
  moteBarcode: number | null;
  patch: number | null;
  multiplexers: number[];
  sensors: SensorDraft[];
}

export const SENSOR_TYPES = [
  "ec5_vwc",
  "mcp9700_temp",
  "ps103j2_temp",
  "apds9007_light",
];

export function emptyDraft(): WizardDraft {
  return { moteBarcode: null, patch: null, multiplexers: [], sensors: [] };
}

export class LabelingWizard {
  draft: WizardDraft = emptyDraft();
  lastError: string | null = null;
  finished = false;

  addSensor(): void {
    this.draft.sensors.push({
      barcode: null,
      sensorType: SENSOR_TYPES[0],
      depthCm: 10,
      multiplexer: null,
      channel: null,
    });
  }

  // the operator cannot finish with required fields unassigned
  validationProblems(): string[] {
    const problems: string[] = [];
    const d = this.draft;
    if (d.moteBarcode === null) problems.push("mote barcode is required");
    if (d.sensors.length === 0) problems.push("add at least one sensor");
    d.sensors.forEach((s, i) => {
      if (s.barcode === null) problems.push(`sensor ${i + 1}: barcode missing`);
      if (!SENSOR_TYPES.includes(s.sensorType))
        problems.push(`sensor ${i + 1}: unknown type`);
      if (s.multiplexer === null)
        problems.push(`sensor ${i + 1}: multiplexer missing`);
      if (s.channel === null || s.channel < 0 || s.channel > 7)
        problems.push(`sensor ${i + 1}: channel must be 0-7`);
    });
    const channels = d.sensors.map((s) => `${s.multiplexer}:${s.channel}`);
    if (new Set(channels).size !== channels.length)
      problems.push("two sensors share a channel");
    return problems;
  }

  canFinish(): boolean {
    return this.validationProblems().length === 0;
  }

  abandon(): void {
    this.draft = emptyDraft();
    this.lastError = null;
    this.finished = false;
  }

  async finish(api: ApiClient): Promise<boolean> {
    this.lastError = null;
    const problems = this.validationProblems();
    if (problems.length > 0) {
      this.lastError = problems.join("; ");
      return false;
    }
    const d = this.draft;
    const muxes = new Set<number>(d.multiplexers);
    for (const s of d.sensors) muxes.add(s.multiplexer as number);
    try {
      await api.label(d.moteBarcode as number, "mote", {
        patch: d.patch ?? undefined,
      });
      for (const mux of [...muxes].sort((a, b) => a - b)) {
        await api.label(mux, "multiplexer", { mote: d.moteBarcode });
      }
      for (const s of d.sensors) {
        await api.label(s.barcode as number, "sensor", {
          sensor_type: s.sensorType,
          depth_cm: s.depthCm,
        });
        await api.label(s.barcode as number, "assignment", {
          mote: d.moteBarcode,
          multiplexer: s.multiplexer,
          channel: s.channel,
        });
      }
    } catch (err) {
      this.lastError = err instanceof ApiError ? err.message : String(err);
      return false;
    }
    this.finished = true;
    return true;
  }
}
