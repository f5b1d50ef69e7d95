/**
 * Non-blocking notification area.  Server errors arrive as structured
 * detail lists; each entry is shown with its machine-readable type so a
 * failed call never silently disappears and never blocks the next gesture.
 */

import { ApiError } from "../api/client";

const DEFAULT_TTL_MS = 6000;

export class ToastHub {
  private readonly host: HTMLElement;

  constructor(parent: HTMLElement) {
    this.host = document.createElement("div");
    this.host.className = "toast-hub";
    parent.appendChild(this.host);
  }

  show(message: string, kind: "error" | "info" = "info", ttlMs: number = DEFAULT_TTL_MS): void {
    const toast = document.createElement("div");
    toast.className = `toast toast-${kind}`;
    toast.textContent = message;
    toast.addEventListener("click", () => toast.remove());
    this.host.appendChild(toast);
    setTimeout(() => toast.remove(), ttlMs);
  }

  /** Render any thrown value; ApiError details keep their codes visible. */
  error(err: unknown): void {
    if (err instanceof ApiError) {
      for (const d of err.detail) {
        const loc = d.loc.length ? ` at ${d.loc.join(".")}` : "";
        this.show(`[${d.type}] ${d.msg}${loc}`, "error");
      }
      return;
    }
    this.show(err instanceof Error ? err.message : String(err), "error");
  }

  /** Wrap an async handler so rejections surface as toasts. */
  guard<A extends unknown[]>(fn: (...args: A) => Promise<void>): (...args: A) => void {
    return (...args: A) => {
      fn(...args).catch((err) => this.error(err));
    };
  }
}
