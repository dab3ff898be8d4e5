/** Typed client for the switch's HTTP JSON gateway.
 *
 * Every call resolves to a GatewayResult whose `code` mirrors the switch's
 * response-code vocabulary: HTTP 200 means "Approved", declined requests
 * carry their code in the JSON body, and anything without a code falls back
 * to "HTTP <status>".  Network failures (the switch being down, not a
 * declined request) raise GatewayDown instead.
 */

export interface MinutiaPoint {
  x: number;
  y: number;
  angle: number;
  kind: "E" | "B";
}

export interface TxnRecord {
  seq: number;
  kind: "withdraw" | "deposit";
  amount: number;
  resulting_balance: number;
  timestamp_ms: number;
}

export type TxnType = "withdraw" | "deposit" | "balance" | "statement";

interface GatewayBody {
  code?: string;
  error?: string;
  token?: string;
  retries_remaining?: number;
  score?: number;
  balance?: number;
  records?: TxnRecord[];
  samples?: string[];
}

export interface GatewayResult {
  ok: boolean;
  code: string;
  status: number;
  body: GatewayBody;
}

export class GatewayDown extends Error {}

/** What the kiosk machine needs from the switch; tests stub this. */
export interface GatewayApi {
  openSession(pan: string, pin: string): Promise<GatewayResult>;
  listSamples(): Promise<string[]>;
  verifyBySample(token: string, sampleId: string): Promise<GatewayResult>;
  verifyByMinutiae(token: string, minutiae: MinutiaPoint[]): Promise<GatewayResult>;
  transact(token: string, type: TxnType, amount: number): Promise<GatewayResult>;
  endSession(token: string, opts?: { record?: boolean }): Promise<GatewayResult>;
}

export class Gateway implements GatewayApi {
  constructor(
    private readonly base: string,
    private readonly onCode: ((code: string) => void) | null = null,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async call(
    method: string,
    path: string,
    payload?: unknown,
    record = true,
  ): Promise<GatewayResult> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, {
        method,
        headers: payload === undefined ? undefined : { "Content-Type": "application/json" },
        body: payload === undefined ? undefined : JSON.stringify(payload),
      });
    } catch (err) {
      throw new GatewayDown(`gateway unreachable: ${err}`);
    }
    const body = (await resp.json().catch(() => ({}))) as GatewayBody;
    const code = resp.ok ? "Approved" : typeof body.code === "string" ? body.code : `HTTP ${resp.status}`;
    if (record && this.onCode) this.onCode(code);
    return { ok: resp.ok, code, status: resp.status, body };
  }

  openSession(pan: string, pin: string): Promise<GatewayResult> {
    return this.call("POST", "/api/session", { pan, pin });
  }

  async listSamples(): Promise<string[]> {
    // a directory listing, not an authorization decision: never recorded
    const result = await this.call("GET", "/api/samples", undefined, false);
    return result.body.samples ?? [];
  }

  verifyBySample(token: string, sampleId: string): Promise<GatewayResult> {
    return this.call("POST", `/api/session/${token}/biometric`, { sample_id: sampleId });
  }

  verifyByMinutiae(token: string, minutiae: MinutiaPoint[]): Promise<GatewayResult> {
    return this.call("POST", `/api/session/${token}/biometric`, { minutiae });
  }

  transact(token: string, type: TxnType, amount: number): Promise<GatewayResult> {
    return this.call("POST", `/api/session/${token}/txn`, { type, amount });
  }

  endSession(token: string, opts: { record?: boolean } = {}): Promise<GatewayResult> {
    return this.call("DELETE", `/api/session/${token}`, undefined, opts.record ?? true);
  }
}
