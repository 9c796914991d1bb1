"""The pursuit-evasion scenario with an ASCII view of the chase.

Four pursuers start in the corners of a 10x10 grid; the evader flees to
maximize its distance from the pack. The first robot to spot it becomes the
organizer, rings the predicted position with sub-goals, and auctions them.
Capture needs two pursuers adjacent to the evader.
"""

from fractions import Fraction

from hwrom import formation as fm
from hwrom import pursuit, simnet
from hwrom.org_core import Capability, CapabilityKind, CooperativeRobot

CAPS = frozenset({
    Capability(CapabilityKind.ORGANIZATION, "plan", Fraction(1)),
    Capability(CapabilityKind.COMMUNICATION, "radio", Fraction(1)),
    Capability(CapabilityKind.MOVING, "speed", Fraction(1)),
    Capability(CapabilityKind.SENSING, "vision", Fraction(14)),
})


def render(world: pursuit.WorldState) -> str:
    grid = [["." for _ in range(world.width)] for _ in range(world.height)]
    for rid, pose in world.robots.items():
        if pose.alive:
            x, y = pose.pos
            grid[y][x] = rid[-1]
    for eid, ev in world.evaders.items():
        x, y = ev.pos
        grid[y][x] = "*" if eid not in world.captured else "#"
    return "\n".join("".join(row) for row in grid)


def main() -> None:
    robots = [CooperativeRobot(f"R{i}", CAPS) for i in range(1, 5)]
    world = pursuit.WorldState(10, 10)
    for rid, pos in zip(("R1", "R2", "R3", "R4"), ((0, 0), (9, 0), (0, 9), (9, 9))):
        world.robots[rid] = pursuit.RobotPose(pos, 1, 14)
    world.evaders["e1"] = pursuit.EvaderState((5, 5), 1)

    state = fm.new_state(robots, fm.EngineParams(pursuit=fm.PursuitParams()), world=world)
    scheduler = simnet.Scheduler(state, simnet.NetConfig())

    print(render(world))
    for upto in (4, 8, 12, 200):
        scheduler.run(until=upto, stop_when=lambda s: s.phase is fm.Phase.DONE)
        print(f"\n--- tick {world.tick} ---")
        print(render(world))
        if state.phase is fm.Phase.DONE:
            break

    for rec in scheduler.trace:
        if rec["type"] != "event":
            continue
        for note in rec["detail"]["notes"]:
            if note["kind"] == "organizer_elected":
                print(f"\norganizer: {note['robot']} (first to spot the evader)")
            elif note["kind"] == "planned":
                print(f"surround plan: {note['subgoals']}")
            elif note["kind"] == "captured":
                print(f"captured at tick {note['tick']}")
            elif note["kind"] == "mission_done":
                print(f"pursuit rewards: {note['utilities']}")


if __name__ == "__main__":
    main()
