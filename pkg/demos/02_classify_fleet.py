"""
Server taxonomy from lag comparisons
====================================

Classifies a synthetic fleet over its trailing week and shows the ratio
statistics behind one verdict.  A server is stable when each interval day
stays inside the error band against the interval average, daily-patterned
when it repeats yesterday, weekly-patterned when it repeats the same day
last week but not yesterday.
"""

from collections import Counter
from datetime import timedelta

from loadsched.classify import ServerClass, classify_server_detailed, span_days
from loadsched.synthgen import FleetConfig, generate_fleet

config = FleetConfig(
    server_count=40,
    mix={
        ServerClass.STABLE: 0.3,
        ServerClass.DAILY_PATTERN: 0.25,
        ServerClass.WEEKLY_PATTERN: 0.15,
        ServerClass.NO_PATTERN: 0.15,
        ServerClass.SHORT_LIVED: 0.15,
    },
    weeks=4,
    seed=7,
)
fleet = generate_fleet(config)

verdicts = Counter()
mislabeled = []
for s in fleet.history:
    week = span_days(s.last_day - timedelta(days=6), 7)
    result = classify_server_detailed(s, week, as_of=s.last_day + timedelta(days=1))
    verdicts[result.server_class] += 1
    if result.server_class is not fleet.labels[s.server_id]:
        mislabeled.append(s.server_id)

print("classification over each server's trailing week:")
for cls, n in sorted(verdicts.items(), key=lambda kv: kv[0].value):
    print(f"  {cls.value:<15} {n}")
print(f"disagreements with generator ground truth: {len(mislabeled)}")

# Look inside one daily-patterned verdict.  Each test computes, per tested
# interval day, the percentage of slots whose error against the predictor
# stayed inside the band; a test passes when every day reaches 90.  The
# summary keeps the worst and mean day.
daily_id = next(sid for sid, c in fleet.labels.items() if c is ServerClass.DAILY_PATTERN)
daily = next(s for s in fleet.history if s.server_id == daily_id)
week = span_days(daily.last_day - timedelta(days=6), 7)
result = classify_server_detailed(daily, week, as_of=daily.last_day + timedelta(days=1))

print(f"\n{daily_id} -> {result.server_class.value}")
for test_name, stats in result.bucket_ratio_stats.items():
    print(f"  {test_name:<7} days={stats['n_days']} "
          f"min in-band ratio {stats['min']:.2f}, mean {stats['mean']:.2f}")

# Precedence is short-lived > stable > daily > weekly > no-pattern, so a
# flat server never reaches the lag tests.
stable_id = next(sid for sid, c in fleet.labels.items() if c is ServerClass.STABLE)
stable = next(s for s in fleet.history if s.server_id == stable_id)
result = classify_server_detailed(stable, week, as_of=stable.last_day + timedelta(days=1))
print(f"\n{stable_id} -> {result.server_class.value}; "
      f"tests run: {sorted(result.bucket_ratio_stats)}")
