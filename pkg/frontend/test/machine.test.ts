/** State-chart tests against a stubbed gateway.
 *
 * The stub mirrors the switch's decision rules but deliberately approves
 * transactions for any live token, so the only thing standing between an
 * event sequence and a transaction screen is the machine's own flow.  The
 * fuzz suites lean on that: if any sequence reached the menu without both
 * factor approvals, the invariant check would trip.
 */

import { describe, expect, it } from "vitest";

import {
  GatewayApi,
  GatewayDown,
  GatewayResult,
  MinutiaPoint,
  TxnRecord,
  TxnType,
} from "../src/gateway.js";
import { KioskEvent, KioskMachine, MenuItem, ScreenState, validAmount } from "../src/machine.js";
import { parseMinutiae } from "../src/minutiae.js";

const PAN = "79927398713";
const PIN = "1234";
const VALID_TEXT = "MINUTIAE v1 2\n10 10 0 E\n20 20 90 B\n";
const AUTH_SCREENS = new Set(["MenuSelect", "Withdraw", "Deposit", "Statement", "DoneDialog"]);

interface MockConfig {
  pan: string;
  pin: string;
  balance: number;
  maxTries: number;
  bio: "match" | "mismatch";
  dispense: number;
}

class MockSwitch implements GatewayApi {
  calls: string[] = [];
  down = false;
  authApproved = false;
  bioApproved = false;
  balance: number;
  lastMinutiae: MinutiaPoint[] | null = null;
  private token: string | null = null;
  private tries = 0;
  private blocked = false;
  private issued = 0;
  private seq = 0;
  private records: TxnRecord[] = [];

  constructor(private readonly cfg: MockConfig) {
    this.balance = cfg.balance;
  }

  private guard(name: string): void {
    this.calls.push(name);
    if (this.down) throw new GatewayDown("stub offline");
  }

  private approved(body: GatewayResult["body"]): GatewayResult {
    return { ok: true, code: "Approved", status: 200, body };
  }

  private declined(code: string, body: GatewayResult["body"] = {}): GatewayResult {
    return { ok: false, code, status: 409, body: { code, ...body } };
  }

  private notFound(): GatewayResult {
    return { ok: false, code: "HTTP 404", status: 404, body: { error: "unknown session" } };
  }

  private endCurrent(): void {
    this.token = null;
    this.authApproved = false;
    this.bioApproved = false;
  }

  async openSession(pan: string, pin: string): Promise<GatewayResult> {
    this.guard("openSession");
    this.endCurrent();
    if (this.blocked) return this.declined("CardBlocked", { retries_remaining: 0 });
    if (pan !== this.cfg.pan) return this.declined("InvalidCard", { retries_remaining: 0 });
    if (pin !== this.cfg.pin) {
      this.tries += 1;
      if (this.tries >= this.cfg.maxTries) {
        this.blocked = true;
        return this.declined("PinTriesExceeded", { retries_remaining: 0 });
      }
      return this.declined("InvalidPin", { retries_remaining: this.cfg.maxTries - this.tries });
    }
    this.tries = 0;
    this.token = `token-${++this.issued}`;
    this.authApproved = true;
    return this.approved({ token: this.token, retries_remaining: this.cfg.maxTries });
  }

  async listSamples(): Promise<string[]> {
    this.guard("listSamples");
    return ["s000_0", "s000_1", "s001_0"];
  }

  private verdict(hit: boolean): GatewayResult {
    if (hit) {
      this.bioApproved = true;
      return this.approved({ score: 0.812 });
    }
    // one mismatch ends the session switch-side
    this.endCurrent();
    return this.declined("BiometricMismatch", { score: 0.054 });
  }

  async verifyBySample(token: string, sampleId: string): Promise<GatewayResult> {
    this.guard("verifyBySample");
    if (this.token === null || token !== this.token) return this.notFound();
    return this.verdict(this.cfg.bio === "match" && !sampleId.startsWith("s001"));
  }

  async verifyByMinutiae(token: string, minutiae: MinutiaPoint[]): Promise<GatewayResult> {
    this.guard("verifyByMinutiae");
    this.lastMinutiae = minutiae;
    if (this.token === null || token !== this.token) return this.notFound();
    return this.verdict(this.cfg.bio === "match");
  }

  async transact(token: string, type: TxnType, amount: number): Promise<GatewayResult> {
    this.guard(`transact:${type}`);
    if (this.token === null || token !== this.token) return this.notFound();
    if (type === "withdraw") {
      if (amount % this.cfg.dispense !== 0) return this.declined("NotDispensable", { balance: this.balance });
      if (amount > this.balance) return this.declined("InsufficientFunds", { balance: this.balance });
      this.balance -= amount;
      this.records.push({
        seq: ++this.seq, kind: "withdraw", amount,
        resulting_balance: this.balance, timestamp_ms: 1_700_000_000_000 + this.seq,
      });
    } else if (type === "deposit") {
      this.balance += amount;
      this.records.push({
        seq: ++this.seq, kind: "deposit", amount,
        resulting_balance: this.balance, timestamp_ms: 1_700_000_000_000 + this.seq,
      });
    }
    const body: GatewayResult["body"] = { balance: this.balance };
    if (type === "statement") body.records = this.records.slice(-10);
    return this.approved(body);
  }

  async endSession(token: string): Promise<GatewayResult> {
    this.guard("endSession");
    if (this.token === null || token !== this.token) return this.notFound();
    this.endCurrent();
    return this.approved({});
  }
}

function mock(over: Partial<MockConfig> = {}): MockSwitch {
  return new MockSwitch({
    pan: PAN, pin: PIN, balance: 10_000, maxTries: 3, bio: "match", dispense: 1000, ...over,
  });
}

function machineWith(stub: GatewayApi, dispense = 1000): KioskMachine {
  return new KioskMachine(stub, dispense);
}

async function toMenu(m: KioskMachine): Promise<void> {
  await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
  const state = await m.dispatch({ type: "PickSample", sampleId: "s000_1" });
  expect(state.screen).toBe("MenuSelect");
}

describe("login screen", () => {
  it("shows a modal with the remaining tries on a wrong PIN and re-presents the form", async () => {
    const m = machineWith(mock());
    const state = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: "9999" });
    expect(state).toEqual({ screen: "Login", retries: 2, modal: "Invalid PIN. 2 tries remaining." });
    const cleared = await m.dispatch({ type: "DismissModal" });
    expect(cleared).toEqual({ screen: "Login", retries: 2, modal: null });
  });

  it("says so when the card number is not recognized", async () => {
    const m = machineWith(mock());
    const state = await m.dispatch({ type: "SubmitLogin", pan: "79927398705", pin: PIN });
    expect(state.screen).toBe("Login");
    expect((state as { modal: string | null }).modal).toMatch(/card number/i);
  });

  it("reports the block when the PIN counter runs out", async () => {
    const m = machineWith(mock({ maxTries: 2 }));
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: "0000" });
    const state = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: "0000" });
    expect((state as { modal: string | null }).modal).toMatch(/blocked/i);
    const again = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    expect((again as { modal: string | null }).modal).toMatch(/blocked/i);
  });

  it("moves to the fingerprint prompt with the sample list after an approved login", async () => {
    const stub = mock();
    const m = machineWith(stub);
    const state = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    expect(state).toEqual({
      screen: "FingerprintPrompt",
      samples: ["s000_0", "s000_1", "s001_0"],
      error: null,
    });
    expect(stub.calls).toEqual(["openSession", "listSamples"]);
  });

  it("never keeps the PIN anywhere on the machine", async () => {
    const m = machineWith(mock({ pin: "8642" }));
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: "8642" });
    // the stub's own account config holds the PIN by definition; everything
    // the machine itself keeps must not
    const withoutGateway = JSON.stringify(m, (key, value) => (key === "gateway" ? undefined : value));
    expect(withoutGateway).toContain("FingerprintPrompt");
    expect(withoutGateway).not.toContain("8642");
  });
});

describe("fingerprint screen", () => {
  it("advances to the menu on a match", async () => {
    const m = machineWith(mock());
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    const state = await m.dispatch({ type: "PickSample", sampleId: "s000_1" });
    expect(state).toEqual({ screen: "MenuSelect", notice: null });
  });

  it("on a mismatch shows the denial dialog, ends the session, and OK returns to login", async () => {
    const stub = mock();
    const m = machineWith(stub);
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    const denied = await m.dispatch({ type: "PickSample", sampleId: "s001_0" });
    expect(denied).toEqual({
      screen: "DeniedDialog",
      message: "Fingerprint does not match. You have been logged off.",
    });
    // the machine must not consider itself logged in afterwards
    const after = await m.dispatch({ type: "AckDenied" });
    expect(after).toEqual({ screen: "Login", retries: null, modal: null });
    expect(m.authenticated).toBe(false);
  });

  it("sends parsed minutiae from an uploaded template", async () => {
    const stub = mock();
    const m = machineWith(stub);
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    const state = await m.dispatch({ type: "SubmitMinutiae", text: VALID_TEXT });
    expect(state.screen).toBe("MenuSelect");
    expect(stub.lastMinutiae).toEqual([
      { x: 10, y: 10, angle: 0, kind: "E" },
      { x: 20, y: 20, angle: 90, kind: "B" },
    ]);
  });

  it("rejects a malformed upload locally without calling the gateway", async () => {
    const stub = mock();
    const m = machineWith(stub);
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    const before = stub.calls.length;
    const state = await m.dispatch({ type: "SubmitMinutiae", text: "MINUTIAE v1 3\n10 10 0 E\n" });
    expect(state.screen).toBe("FingerprintPrompt");
    expect((state as { error: string | null }).error).toMatch(/promises 3 records/);
    expect(stub.calls.length).toBe(before);
  });
});

describe("transactions", () => {
  it("withdraws and shows the post-transaction balance in the done dialog", async () => {
    const m = machineWith(mock());
    await toMenu(m);
    await m.dispatch({ type: "Choose", item: "withdraw" });
    const state = await m.dispatch({ type: "SubmitAmount", amount: 3000 });
    expect(state).toEqual({ screen: "DoneDialog", message: "Withdrawal successful.", balance: 7000 });
    const menu = await m.dispatch({ type: "AckDone" });
    expect(menu.screen).toBe("MenuSelect");
  });

  it("deposits and shows the new balance", async () => {
    const m = machineWith(mock());
    await toMenu(m);
    await m.dispatch({ type: "Choose", item: "deposit" });
    const state = await m.dispatch({ type: "SubmitAmount", amount: 2000 });
    expect(state).toEqual({ screen: "DoneDialog", message: "Deposit successful.", balance: 12_000 });
  });

  it("refuses a non-multiple amount before any gateway call", async () => {
    const stub = mock();
    const m = machineWith(stub);
    await toMenu(m);
    await m.dispatch({ type: "Choose", item: "withdraw" });
    const before = stub.calls.length;
    for (const amount of [2500, 0, -1000, 1.5, Number.NaN]) {
      const state = await m.dispatch({ type: "SubmitAmount", amount });
      expect(state.screen).toBe("Withdraw");
      expect((state as { error: string | null }).error).toMatch(/positive multiple of 1000/);
    }
    expect(stub.calls.length).toBe(before);
  });

  it("shows a decline on the amount screen and stays in the session", async () => {
    const m = machineWith(mock({ balance: 2000 }));
    await toMenu(m);
    await m.dispatch({ type: "Choose", item: "withdraw" });
    const state = await m.dispatch({ type: "SubmitAmount", amount: 5000 });
    expect(state).toEqual({ screen: "Withdraw", error: "Insufficient funds." });
    const back = await m.dispatch({ type: "Back" });
    expect(back.screen).toBe("MenuSelect");
  });

  it("shows the balance from the menu", async () => {
    const m = machineWith(mock());
    await toMenu(m);
    const state = await m.dispatch({ type: "Choose", item: "balance" });
    expect(state).toEqual({ screen: "DoneDialog", message: "Current balance", balance: 10_000 });
  });

  it("lists the latest records on the statement screen", async () => {
    const m = machineWith(mock());
    await toMenu(m);
    await m.dispatch({ type: "Choose", item: "withdraw" });
    await m.dispatch({ type: "SubmitAmount", amount: 1000 });
    await m.dispatch({ type: "AckDone" });
    await m.dispatch({ type: "Choose", item: "deposit" });
    await m.dispatch({ type: "SubmitAmount", amount: 4000 });
    await m.dispatch({ type: "AckDone" });
    const state = await m.dispatch({ type: "Choose", item: "statement" });
    expect(state.screen).toBe("Statement");
    const records = (state as { records: TxnRecord[] }).records;
    expect(records.map((r) => [r.kind, r.amount, r.resulting_balance])).toEqual([
      ["withdraw", 1000, 9000],
      ["deposit", 4000, 13_000],
    ]);
  });

  it("exit ends the session and returns to login", async () => {
    const stub = mock();
    const m = machineWith(stub);
    await toMenu(m);
    const state = await m.dispatch({ type: "Choose", item: "exit" });
    expect(state).toEqual({ screen: "Login", retries: null, modal: null });
    expect(stub.calls.at(-1)).toBe("endSession");
    expect(stub.authApproved).toBe(false);
  });
});

describe("connection loss", () => {
  it("keeps the screen and raises the offline flag when the gateway is down", async () => {
    const stub = mock();
    const m = machineWith(stub);
    stub.down = true;
    const state = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    expect(state.screen).toBe("Login");
    expect(m.offline).toBe(true);
  });

  it("retry clears the flag once the gateway answers again", async () => {
    const stub = mock();
    const m = machineWith(stub);
    stub.down = true;
    await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    await m.dispatch({ type: "Retry" });
    expect(m.offline).toBe(true);
    stub.down = false;
    await m.dispatch({ type: "Retry" });
    expect(m.offline).toBe(false);
    const state = await m.dispatch({ type: "SubmitLogin", pan: PAN, pin: PIN });
    expect(state.screen).toBe("FingerprintPrompt");
  });
});

describe("event discipline", () => {
  it("ignores transaction events on unauthenticated screens", async () => {
    const stub = mock();
    const m = machineWith(stub);
    const events: KioskEvent[] = [
      { type: "Choose", item: "withdraw" },
      { type: "SubmitAmount", amount: 1000 },
      { type: "AckDone" },
      { type: "Back" },
      { type: "PickSample", sampleId: "s000_1" },
    ];
    for (const event of events) {
      const state = await m.dispatch(event);
      expect(state.screen).toBe("Login");
    }
    expect(stub.calls).toEqual([]);
  });
});

describe("amount validation", () => {
  it("accepts exactly the positive multiples of the dispense unit", () => {
    expect(validAmount(1000, 1000)).toBe(true);
    expect(validAmount(50_000, 50_000)).toBe(true);
    expect(validAmount(150_000, 50_000)).toBe(true);
    expect(validAmount(0, 1000)).toBe(false);
    expect(validAmount(-1000, 1000)).toBe(false);
    expect(validAmount(1500, 1000)).toBe(false);
    expect(validAmount(999.5, 1000)).toBe(false);
    expect(validAmount(Number.NaN, 1000)).toBe(false);
  });
});

describe("template parsing", () => {
  it("parses a well-formed document", () => {
    expect(parseMinutiae("MINUTIAE v1 1\n500 501 359 B\n")).toEqual([
      { x: 500, y: 501, angle: 359, kind: "B" },
    ]);
  });

  it("tolerates trailing blank lines only", () => {
    expect(parseMinutiae(VALID_TEXT + "\n  \n")).toHaveLength(2);
    expect(() => parseMinutiae("MINUTIAE v1 1\n 10 10 0 E\n")).toThrow(/malformed record/);
  });

  it.each([
    ["", /empty template/],
    ["MINUTIAE v2 1\n10 10 0 E\n", /malformed header/],
    ["MINUTIAE v1 2\n10 10 0 E\n", /promises 2 records/],
    ["MINUTIAE v1 1\n10 10 0 Q\n", /malformed record/],
    ["MINUTIAE v1 1\n1001 10 0 E\n", /out of field/],
    ["MINUTIAE v1 1\n10 10 360 E\n", /angle out of range/],
    ["MINUTIAE v1 2\n10 10 0 E\n10 10 90 B\n", /duplicate/],
  ])("rejects %j", (text, pattern) => {
    expect(() => parseMinutiae(text)).toThrow(pattern);
  });
});

// ---------------------------------------------------------------------------
// Fuzzed bypass proofs

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const ITEMS: MenuItem[] = ["withdraw", "deposit", "balance", "statement", "exit"];

function randomEvent(rnd: () => number): KioskEvent {
  switch (Math.floor(rnd() * 10)) {
    case 0:
      return { type: "SubmitLogin", pan: PAN, pin: rnd() < 0.5 ? PIN : "9999" };
    case 1:
      return { type: "DismissModal" };
    case 2:
      return { type: "PickSample", sampleId: rnd() < 0.5 ? "s000_1" : "s001_0" };
    case 3:
      return { type: "SubmitMinutiae", text: rnd() < 0.5 ? VALID_TEXT : "not a template" };
    case 4:
      return { type: "Choose", item: ITEMS[Math.floor(rnd() * ITEMS.length)] };
    case 5:
      return { type: "SubmitAmount", amount: [1000, 2000, 2500, 0, -100][Math.floor(rnd() * 5)] };
    case 6:
      return { type: "Back" };
    case 7:
      return { type: "AckDone" };
    case 8:
      return { type: "AckDenied" };
    default:
      return { type: "Retry" };
  }
}

function onScreen(state: ScreenState): string {
  return state.screen;
}

describe("menu reachability", () => {
  it("1000 fuzzed sequences: transaction screens imply both factors approved", async () => {
    const rnd = mulberry32(0xb10a7);
    let visits = 0;
    for (let round = 0; round < 1000; round++) {
      const stub = mock();
      const m = machineWith(stub);
      const length = 1 + Math.floor(rnd() * 10);
      for (let i = 0; i < length; i++) {
        const state = await m.dispatch(randomEvent(rnd));
        if (AUTH_SCREENS.has(onScreen(state))) {
          visits += 1;
          expect(stub.authApproved && stub.bioApproved).toBe(true);
        }
      }
    }
    // the generator must actually reach the menu often, or the proof is empty
    expect(visits).toBeGreaterThan(100);
  });

  it("500 fuzzed sequences with a never-matching finger never leave the entry screens", async () => {
    const rnd = mulberry32(0x5eb);
    for (let round = 0; round < 500; round++) {
      const stub = mock({ bio: "mismatch" });
      const m = machineWith(stub);
      for (let i = 0, n = 1 + Math.floor(rnd() * 10); i < n; i++) {
        const state = await m.dispatch(randomEvent(rnd));
        expect(AUTH_SCREENS.has(onScreen(state))).toBe(false);
      }
    }
  });

  it("500 fuzzed sequences with a wrong PIN on file never pass the login screen", async () => {
    const rnd = mulberry32(0xacc3);
    for (let round = 0; round < 500; round++) {
      const stub = mock({ pin: "0000" });
      const m = machineWith(stub);
      for (let i = 0, n = 1 + Math.floor(rnd() * 10); i < n; i++) {
        const state = await m.dispatch(randomEvent(rnd));
        expect(onScreen(state)).toBe("Login");
      }
    }
  });
});
