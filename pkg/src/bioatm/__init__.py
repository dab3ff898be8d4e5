"""Three-factor ATM authorization stack: card number, PIN, fingerprint.

Modules:
    minutiae  fingerprint templates, matching, synthesis, FAR/FRR sweeps
    wire      framed binary protocol shared by terminals and the switch
    vault     append-only journal of cardholders, PIN digests, and balances
    switch    session state machine plus TCP and HTTP front ends
    teller    terminal client (interactive and scripted)
    enroll    operator tooling: enrollment, card blocking, calibration
"""

__version__ = "0.1.0"
