/** Kiosk screen flow: Login -> FingerprintPrompt -> MenuSelect -> transactions.
 *
 * All progress happens in dispatch(); the DOM layer only renders the
 * returned ScreenState and feeds user gestures back in as events.  The menu
 * is assigned in exactly one place, the Approved branch of the fingerprint
 * check, and that branch can only run with the token issued by an Approved
 * login, so no event sequence reaches a transaction screen without both
 * factors.  The PIN is forwarded to the gateway and never kept.
 */

import { GatewayApi, GatewayDown, GatewayResult, TxnRecord, TxnType } from "./gateway.js";
import { parseMinutiae } from "./minutiae.js";

export type ScreenState =
  | { screen: "Login"; retries: number | null; modal: string | null }
  | { screen: "FingerprintPrompt"; samples: string[]; error: string | null }
  | { screen: "MenuSelect"; notice: string | null }
  | { screen: "Withdraw"; error: string | null }
  | { screen: "Deposit"; error: string | null }
  | { screen: "Statement"; records: TxnRecord[]; balance: number }
  | { screen: "DoneDialog"; message: string; balance: number | null }
  | { screen: "DeniedDialog"; message: string };

export type MenuItem = "withdraw" | "deposit" | "balance" | "statement" | "exit";

export type KioskEvent =
  | { type: "SubmitLogin"; pan: string; pin: string }
  | { type: "DismissModal" }
  | { type: "PickSample"; sampleId: string }
  | { type: "SubmitMinutiae"; text: string }
  | { type: "Choose"; item: MenuItem }
  | { type: "SubmitAmount"; amount: number }
  | { type: "Back" }
  | { type: "AckDone" }
  | { type: "AckDenied" }
  | { type: "Retry" };

export function loginScreen(): ScreenState {
  return { screen: "Login", retries: null, modal: null };
}

/** Pre-submission check for both amount screens. */
export function validAmount(amount: number, dispense: number): boolean {
  return Number.isInteger(amount) && amount > 0 && amount % dispense === 0;
}

function loginModal(code: string, retries: number | null): string {
  switch (code) {
    case "InvalidCard":
      return "Invalid card number. Please check the digits and try again.";
    case "InvalidPin":
      return retries === null
        ? "Invalid PIN. Please try again."
        : `Invalid PIN. ${retries} ${retries === 1 ? "try" : "tries"} remaining.`;
    case "PinTriesExceeded":
      return "Too many wrong PINs. The card is now blocked; contact the bank.";
    case "CardBlocked":
      return "This card is blocked. Contact the bank.";
    case "Malformed":
      return "Check the card number and PIN format.";
    default:
      return `Login refused (${code}).`;
  }
}

function deniedMessage(code: string): string {
  switch (code) {
    case "BiometricMismatch":
      return "Fingerprint does not match. You have been logged off.";
    case "CardBlocked":
      return "This card is blocked. You have been logged off.";
    case "InvalidSession":
      return "Session expired. Please log in again.";
    default:
      return `Session ended (${code}).`;
  }
}

export class KioskMachine {
  state: ScreenState = loginScreen();
  offline = false;
  private token: string | null = null;

  constructor(
    private readonly gateway: GatewayApi,
    readonly dispense: number,
  ) {}

  get authenticated(): boolean {
    return this.token !== null && this.state.screen !== "Login" && this.state.screen !== "FingerprintPrompt";
  }

  /** Apply one user event and return the state the UI should now show.
   *
   * A GatewayDown mid-event leaves the screen as it was and raises the
   * offline flag; the renderer turns that into the connection banner with
   * inputs disabled.
   */
  async dispatch(event: KioskEvent): Promise<ScreenState> {
    try {
      this.state = await this.step(event);
    } catch (err) {
      if (err instanceof GatewayDown) {
        this.offline = true;
        return this.state;
      }
      throw err;
    }
    return this.state;
  }

  private async go(pending: Promise<GatewayResult>): Promise<GatewayResult> {
    const resp = await pending;
    this.offline = false;
    return resp;
  }

  private async step(event: KioskEvent): Promise<ScreenState> {
    if (event.type === "Retry") {
      await this.gateway.listSamples();
      this.offline = false;
      return this.state;
    }
    switch (this.state.screen) {
      case "Login":
        return this.atLogin(this.state, event);
      case "FingerprintPrompt":
        return this.atFingerprint(this.state, event);
      case "MenuSelect":
        return this.atMenu(event);
      case "Withdraw":
      case "Deposit":
        return this.atAmount(this.state, event);
      case "Statement":
        return event.type === "Back" ? { screen: "MenuSelect", notice: null } : this.state;
      case "DoneDialog":
        return event.type === "AckDone" ? { screen: "MenuSelect", notice: null } : this.state;
      case "DeniedDialog":
        return event.type === "AckDenied" ? loginScreen() : this.state;
    }
  }

  private async atLogin(
    state: Extract<ScreenState, { screen: "Login" }>,
    event: KioskEvent,
  ): Promise<ScreenState> {
    if (event.type === "DismissModal") return { ...state, modal: null };
    if (event.type !== "SubmitLogin") return state;
    const resp = await this.go(this.gateway.openSession(event.pan, event.pin));
    if (resp.code === "Approved") {
      this.token = String(resp.body.token ?? "");
      const samples = await this.gateway.listSamples();
      return { screen: "FingerprintPrompt", samples, error: null };
    }
    const retries = typeof resp.body.retries_remaining === "number" ? resp.body.retries_remaining : null;
    return { screen: "Login", retries, modal: loginModal(resp.code, retries) };
  }

  private async atFingerprint(
    state: Extract<ScreenState, { screen: "FingerprintPrompt" }>,
    event: KioskEvent,
  ): Promise<ScreenState> {
    if (event.type === "PickSample") {
      return this.verify(this.gateway.verifyBySample(this.token ?? "", event.sampleId));
    }
    if (event.type === "SubmitMinutiae") {
      let points;
      try {
        points = parseMinutiae(event.text);
      } catch (err) {
        return { ...state, error: (err as Error).message };
      }
      if (points.length === 0) return { ...state, error: "template has no minutiae" };
      return this.verify(this.gateway.verifyByMinutiae(this.token ?? "", points));
    }
    return state;
  }

  private async verify(pending: Promise<GatewayResult>): Promise<ScreenState> {
    const resp = await this.go(pending);
    if (resp.code === "Approved") {
      // both factors verified: the only gate into the menu
      return { screen: "MenuSelect", notice: null };
    }
    // one shot only: any refusal logs the customer off
    const token = this.token;
    this.token = null;
    if (token !== null) {
      await this.gateway.endSession(token, { record: false }).catch(() => undefined);
    }
    return { screen: "DeniedDialog", message: deniedMessage(resp.code) };
  }

  private async atMenu(event: KioskEvent): Promise<ScreenState> {
    if (event.type !== "Choose") return this.state;
    switch (event.item) {
      case "withdraw":
        return { screen: "Withdraw", error: null };
      case "deposit":
        return { screen: "Deposit", error: null };
      case "balance": {
        const resp = await this.go(this.gateway.transact(this.token ?? "", "balance", 0));
        if (resp.code !== "Approved") return this.sessionLost(resp.code);
        return { screen: "DoneDialog", message: "Current balance", balance: resp.body.balance ?? 0 };
      }
      case "statement": {
        const resp = await this.go(this.gateway.transact(this.token ?? "", "statement", 0));
        if (resp.code !== "Approved") return this.sessionLost(resp.code);
        return {
          screen: "Statement",
          records: resp.body.records ?? [],
          balance: resp.body.balance ?? 0,
        };
      }
      case "exit": {
        await this.go(this.gateway.endSession(this.token ?? ""));
        this.token = null;
        return loginScreen();
      }
    }
  }

  private async atAmount(
    state: Extract<ScreenState, { screen: "Withdraw" | "Deposit" }>,
    event: KioskEvent,
  ): Promise<ScreenState> {
    if (event.type === "Back") return { screen: "MenuSelect", notice: null };
    if (event.type !== "SubmitAmount") return state;
    if (!validAmount(event.amount, this.dispense)) {
      return { ...state, error: `Enter a positive multiple of ${this.dispense}.` };
    }
    const type: TxnType = state.screen === "Withdraw" ? "withdraw" : "deposit";
    const resp = await this.go(this.gateway.transact(this.token ?? "", type, event.amount));
    if (resp.code === "Approved") {
      const verb = state.screen === "Withdraw" ? "Withdrawal" : "Deposit";
      return { screen: "DoneDialog", message: `${verb} successful.`, balance: resp.body.balance ?? 0 };
    }
    if (resp.code === "InsufficientFunds") return { ...state, error: "Insufficient funds." };
    if (resp.code === "NotDispensable") {
      return { ...state, error: `This machine dispenses multiples of ${this.dispense}.` };
    }
    return this.sessionLost(resp.code);
  }

  private sessionLost(code: string): ScreenState {
    this.token = null;
    return { screen: "DeniedDialog", message: deniedMessage(code) };
  }
}
