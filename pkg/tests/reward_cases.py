"""Hand-evaluated reward oracle cases.

Each expected value is written out as explicit arithmetic over the formula
terms, evaluated by hand independently of the implementation:
  common   = (d_prev - d_cur) + f / 10
  victim   = common - 100.0*(cv+co) - 0.5*(io+iol) + (beta if not iol)
  adv_coll = common +   5.0*(cv+co) + 0.05*(io+iol)
  adv_off  = common                 + 0.05*(io+iol)

Case tuple: (kind, d_prev, d_cur, f, cv, co, io, iol, beta, expected).
"""

REWARD_CASES = [
    # victim
    ("victim", 10.0, 9.5, 5.0, 1, 0, 0, 0, 0.0, 0.5 + 0.5 - 100.0),
    ("victim", 7.0, 7.0, 0.0, 0, 0, 0, 0, 0.5, 0.5),
    ("victim", 20.0, 19.8, 6.0, 0, 0, 1, 1, 0.0, 0.2 + 0.6 - 0.5 * 2),
    ("victim", 5.0, 5.5, 2.0, 0, 0, 0, 0, 0.0, -0.5 + 0.2),
    ("victim", 3.0, 3.0, 0.0, 1, 1, 0, 0, 0.0, -100.0 * 2),
    ("victim", 12.0, 11.5, 5.0, 0, 0, 0, 1, 0.7, 0.5 + 0.5 - 0.5),
    ("victim", 9.0, 9.0, 10.0, 1, 0, 1, 1, 0.25, 1.0 - 100.0 - 0.5 * 2),
    ("victim", 30.0, 29.0, 10.0, 0, 0, 0, 0, 0.5, 1.0 + 1.0 + 0.5),
    ("victim", 4.0, 3.9, 1.0, 0, 1, 0, 0, 0.3, 0.1 + 0.1 - 100.0 + 0.3),
    ("victim", 6.0, 5.8, 2.0, 0, 0, 1, 0, 0.5, 0.2 + 0.2 - 0.5 + 0.5),
    # adversary, collision-seeking variant
    ("adv_collision", 10.0, 9.8, 4.0, 1, 0, 1, 0, 0.0, 0.2 + 0.4 + 5.0 + 0.05),
    ("adv_collision", 1.0, 1.0, 0.0, 0, 0, 0, 0, 0.0, 0.0),
    ("adv_collision", 2.0, 2.0, 0.0, 1, 1, 1, 1, 0.0, 5.0 * 2 + 0.05 * 2),
    ("adv_collision", 8.0, 7.5, 10.0, 0, 0, 0, 0, 0.0, 0.5 + 1.0),
    ("adv_collision", 5.0, 5.0, 0.0, 0, 1, 0, 0, 0.0, 5.0),
    ("adv_collision", 2.0, 1.9, 3.0, 0, 0, 0, 1, 0.0, 0.1 + 0.3 + 0.05),
    ("adv_collision", 1.0, 1.2, 0.5, 1, 0, 0, 1, 0.0, -0.2 + 0.05 + 5.0 + 0.05),
    ("adv_collision", 14.0, 13.3, 7.0, 0, 0, 1, 1, 0.0, 0.7 + 0.7 + 0.05 * 2),
    ("adv_collision", 3.0, 3.0, 0.0, 1, 0, 0, 1, 0.0, 5.0 + 0.05),
    ("adv_collision", 5.0, 4.25, 15.0, 0, 0, 0, 0, 0.0, 0.75 + 1.5),
    # adversary, offroad-seeking variant (collisions contribute nothing)
    ("adv_offroad", 10.0, 9.8, 4.0, 0, 0, 1, 1, 0.0, 0.2 + 0.4 + 0.05 * 2),
    ("adv_offroad", 4.0, 4.0, 0.0, 1, 0, 0, 0, 0.0, 0.0),
    ("adv_offroad", 6.0, 6.0, 10.0, 0, 0, 0, 0, 0.0, 1.0),
    ("adv_offroad", 3.0, 2.8, 2.0, 1, 1, 0, 0, 0.0, 0.2 + 0.2),
    ("adv_offroad", 9.0, 9.0, 0.0, 0, 0, 0, 1, 0.0, 0.05),
    ("adv_offroad", 9.0, 8.4, 5.0, 1, 1, 1, 1, 0.0, 0.6 + 0.5 + 0.05 * 2),
    ("adv_offroad", 2.0, 2.6, 1.0, 0, 0, 0, 0, 0.0, -0.6 + 0.1),
    ("adv_offroad", 7.0, 6.1, 12.0, 0, 0, 1, 0, 0.0, 0.9 + 1.2 + 0.05),
    ("adv_offroad", 5.0, 5.0, 0.0, 0, 0, 0, 0, 5.0, 0.0),
    ("adv_offroad", 11.0, 10.95, 6.0, 0, 0, 0, 1, 0.0, 0.05 + 0.6 + 0.05),
]

assert len(REWARD_CASES) == 30
