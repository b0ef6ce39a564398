import random

import pytest

from schedfuzz.schedule import (
    CRASH,
    DELIVER,
    RESTART,
    BufferId,
    GenParams,
    Schedule,
    ScheduleError,
    ScheduleStep,
    generate_random_schedule,
    parse_schedule,
    serialize_schedule,
    validate_schedule,
)


def test_two_process_universe_has_two_ordered_buffers():
    params = GenParams(2, 1, 1, 0)
    assert set(params.buffer_universe()) == {BufferId(0, 1), BufferId(1, 0)}
    for seed in range(20):
        s = generate_random_schedule(params, random.Random(seed))
        assert len(s.steps) == 1
        step = s.steps[0]
        assert step.op == DELIVER and step.count == 1
        assert step.buffer in (BufferId(0, 1), BufferId(1, 0))


def test_generated_schedule_shape_matches_params():
    params = GenParams(3, 100, 5, 10)
    s = generate_random_schedule(params, random.Random(42))
    assert len(s.steps) == 100
    crashes = [st for st in s.steps if st.op == CRASH]
    assert len(crashes) <= 10
    for st in s.steps:
        if st.op == DELIVER:
            assert 1 <= st.count <= 5
    validate_schedule(s, params)


def test_generation_is_deterministic():
    params = GenParams(3, 100, 5, 10)
    a = generate_random_schedule(params, random.Random(7))
    b = generate_random_schedule(params, random.Random(7))
    assert a == b
    assert serialize_schedule(a) == serialize_schedule(b)


def test_generated_schedules_always_valid():
    rng = random.Random(2024)
    for _ in range(1000):
        params = GenParams(
            num_processes=rng.randint(2, 6),
            max_steps=rng.randint(1, 60),
            max_messages_per_step=rng.randint(1, 5),
            crash_quota=rng.randint(0, 10),
        )
        s = generate_random_schedule(params, random.Random(rng.getrandbits(32)))
        assert len(s.steps) == params.max_steps
        validate_schedule(s, params)


def test_invalid_params_rejected():
    rng = random.Random(0)
    with pytest.raises(ScheduleError):
        generate_random_schedule(GenParams(1, 10, 1, 0), rng)
    with pytest.raises(ScheduleError):
        generate_random_schedule(GenParams(2, 0, 1, 0), rng)
    with pytest.raises(ScheduleError):
        generate_random_schedule(GenParams(2, 10, 0, 0), rng)


def test_round_trip_empty_schedule():
    s = Schedule(steps=(), seed=99)
    assert parse_schedule(serialize_schedule(s)) == s


def test_round_trip_generated_schedules():
    rng = random.Random(5)
    for _ in range(50):
        params = GenParams(4, 40, 5, 6)
        s = generate_random_schedule(params, random.Random(rng.getrandbits(32)))
        assert parse_schedule(serialize_schedule(s)) == s


def test_truncated_json_is_a_parse_error():
    data = serialize_schedule(
        Schedule((ScheduleStep(BufferId(0, 1), DELIVER, 2),), seed=1)
    )
    with pytest.raises(ScheduleError):
        parse_schedule(data[: len(data) // 2])


def test_malformed_step_reports_index():
    with pytest.raises(ScheduleError, match="step 1"):
        parse_schedule(
            b'{"seed":0,"steps":[{"from":0,"to":1,"op":"deliver","n":1},'
            b'{"from":0,"to":1,"op":"teleport"}]}'
        )


def test_alternation_invariant_enforced():
    crash = ScheduleStep(BufferId(0, 1), CRASH)
    restart = ScheduleStep(BufferId(0, 1), RESTART)
    validate_schedule(Schedule((crash, restart)))
    validate_schedule(Schedule((crash,)))  # a crash needs no restart
    validate_schedule(Schedule((restart,)))  # bare restart is a harness no-op
    with pytest.raises(ScheduleError):
        validate_schedule(Schedule((crash, restart, restart)))
