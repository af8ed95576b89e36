#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "support.hpp"

using namespace simarr;

namespace {

std::vector<SweepInstance> canonical(std::vector<SweepInstance> v) {
  std::sort(v.begin(), v.end(), [](const SweepInstance& a, const SweepInstance& b) {
    return std::tie(a.ftt, a.dx, a.dy, a.swt, a.end_cell) < std::tie(b.ftt, b.dx, b.dy, b.swt, b.end_cell);
  });
  return v;
}

const MotionPrimitive& by_name(const PrimitiveSet& set, const std::string& name) {
  for (const auto& pr : set.prims) {
    if (pr.name == name) return pr;
  }
  throw std::runtime_error("no primitive " + name);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "simarr_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("primitives") {
  TEST_CASE("desk lattice shape") {
    const auto& set = testing::desk_set();
    CHECK(set.prims.size() == 57);
    CHECK(set.failures.empty());
    REQUIRE(set.wait_id == 56);
    CHECK(set.prims[set.wait_id].wait);
    CHECK(set.tick == 5);
    CHECK_NOTHROW(set.validate());
    for (const auto& pr : set.prims) {
      CHECK(pr.duration % set.tick == 0);
      CHECK(pr.id == &pr - set.prims.data());
      CHECK_FALSE(pr.sweeps.empty());
    }
  }

  TEST_CASE("every primitive ends on its lattice state") {
    ModelParams p;
    const auto& set = testing::desk_set();
    for (const auto& pr : set.prims) {
      const auto& first = pr.trajectory.samples.front();
      const auto& last = pr.trajectory.samples.back();
      CHECK(first.t == 0.0);
      CHECK(std::abs(last.t - pr.duration * p.sample_dt) < 1e-9);
      CHECK(std::abs(last.x.x - pr.dx() * p.cell_size) < 1e-6);
      CHECK(std::abs(last.x.y - pr.dy() * p.cell_size) < 1e-6);
      CHECK(std::abs(normalize_angle(last.x.theta - heading_angle(pr.end.heading, set.headings))) < 1e-6);
      CHECK(std::abs(last.x.v - set.velocities[pr.end.vel]) < 1e-6);
      CHECK(dynamics_residual(pr.trajectory, p) < 1e-6);
      for (const auto& s : pr.trajectory.samples) CHECK(within_state_bounds(s.x, p, 1e-6));
    }
  }

  TEST_CASE("straight cruise primitive takes distance over speed") {
    ModelParams p;
    const auto& pr = by_name(testing::desk_set(), "straight2");
    CHECK(pr.duration * p.sample_dt == doctest::Approx(2.0 * p.cell_size / 1.0));
    // No steering or acceleration: the running cost is exactly 1 per second.
    CHECK(pr.cost == doctest::Approx(2.0).epsilon(1e-6));
  }

  TEST_CASE("infeasible requests are recorded or reported") {
    ModelParams p;
    LatticeSpec spec;
    spec.include_wait = false;
    spec.rotate = false;
    spec.requests = {{"hairpin", 0, 1, 1, 0, 4, 1, 1.0}};
    CHECK_THROWS_AS(generate_primitives(p, spec, 1), EmptySet);
    spec.requests.push_back({"straight1", 0, 1, 1, 0, 0, 1, 1.0});
    const PrimitiveSet set = generate_primitives(p, spec, 1);
    CHECK(set.prims.size() == 1);
    REQUIRE(set.failures.size() == 1);
    CHECK(set.failures[0].name == "hairpin");
    spec.requests.push_back({"odd", 0, 1, 1, 0, 0, 1, 0.7});
    CHECK_THROWS_AS(generate_primitives(p, spec, 1), SpecError);
  }

  TEST_CASE("reversed sweep of a hand-built instance") {
    MotionPrimitive pr;
    pr.start = {{0, 0}, 0, 1};
    pr.end = {{2, 0}, 0, 1};
    pr.duration = 60;
    pr.sweeps = {{0, 0, 0, 20, false}};
    const MotionPrimitive rev = reverse_primitive(pr, 1.0);
    REQUIRE(rev.sweeps.size() == 1);
    CHECK(rev.sweeps[0] == SweepInstance{-2, 0, 40, 20, true});
    CHECK(rev.start.cell == Cell{0, 0});
    CHECK(rev.end.cell == Cell{-2, 0});
    CHECK(rev.backward);
  }

  TEST_CASE("reversal is an involution on the full set") {
    const auto& set = testing::desk_set();
    for (const auto& pr : set.prims) {
      const MotionPrimitive back = reverse_primitive(reverse_primitive(pr, 1.0), 1.0);
      CHECK(canonical(back.sweeps) == canonical(pr.sweeps));
      CHECK(back.start == pr.start);
      CHECK(back.end == pr.end);
      CHECK(back.duration == pr.duration);
      CHECK(back.cost == pr.cost);
      CHECK(back.backward == pr.backward);
      REQUIRE(back.trajectory.size() == pr.trajectory.size());
      for (std::size_t k = 0; k < pr.trajectory.size(); ++k) {
        CHECK(back.trajectory.samples[k].t == pr.trajectory.samples[k].t);
        CHECK(std::abs(back.trajectory.samples[k].x.x - pr.trajectory.samples[k].x.x) < 1e-12);
        CHECK(std::abs(back.trajectory.samples[k].x.y - pr.trajectory.samples[k].x.y) < 1e-12);
      }
    }
    const PrimitiveSet twice = reverse_set(reverse_set(set, 1.0), 1.0);
    CHECK_FALSE(twice.backward);
    CHECK(twice.applicable(0, 0) == set.applicable(0, 0));
  }

  TEST_CASE("reversed sweeps match dense sampling of the reversed motion") {
    ModelParams p;
    for (const auto& pr : testing::desk_set().prims) {
      const MotionPrimitive rev = reverse_primitive(pr, p.cell_size);
      CHECK(canonical(rev.sweeps) == canonical(compute_sweeps(rev, p)));
    }
  }

  TEST_CASE("arc sweeps match a 1 ms footprint oracle") {
    ModelParams p;
    const double r = p.radius();
    for (const char* name : {"turn90l", "turn45r", "diag2", "accel"}) {
      const auto& pr = by_name(testing::desk_set(), name);
      std::map<std::pair<int, int>, std::pair<double, double>> hull;
      const auto& tr = pr.trajectory;
      for (std::size_t k = 0; k + 1 < tr.size(); ++k) {
        for (int m = 0; m < 100; ++m) {
          const Point2 q = interpolate_position(tr, k, m, 100, p);
          const double t = tr.samples[k].t + 1e-3 * m;
          for (int c = -3; c <= 4; ++c) {
            for (int w = -3; w <= 4; ++w) {
              const double dx = std::max({c - 0.5 - q.x, 0.0, q.x - (c + 0.5)});
              const double dy = std::max({w - 0.5 - q.y, 0.0, q.y - (w + 0.5)});
              if (dx * dx + dy * dy >= r * r) continue;
              auto [it, fresh] = hull.try_emplace({c, w}, t, t);
              it->second.first = std::min(it->second.first, t);
              it->second.second = std::max(it->second.second, t);
            }
          }
        }
      }
      const Point2 end = interpolate_position(tr, tr.size() - 1, 0, 1, p);
      for (auto& [cell, span] : hull) {
        const double dx = std::max({cell.first - 0.5 - end.x, 0.0, end.x - (cell.first + 0.5)});
        const double dy = std::max({cell.second - 0.5 - end.y, 0.0, end.y - (cell.second + 0.5)});
        if (dx * dx + dy * dy < r * r) span.second = tr.samples.back().t;
      }
      std::map<std::pair<int, int>, std::pair<Step, Step>> got;
      for (const auto& s : pr.sweeps) {
        auto [it, fresh] = got.try_emplace({s.dx, s.dy}, s.ftt, s.last());
        it->second.first = std::min(it->second.first, s.ftt);
        it->second.second = std::max(it->second.second, s.last());
      }
      REQUIRE(got.size() == hull.size());
      for (const auto& [cell, span] : hull) {
        REQUIRE(got.count(cell));
        CHECK(got[cell].first == static_cast<Step>(std::floor(span.first / 0.1 + 1e-9)));
        CHECK(got[cell].second == static_cast<Step>(std::ceil(span.second / 0.1 - 1e-9)));
      }
    }
  }

  TEST_CASE("four quarter turns are the identity") {
    const auto& set = testing::desk_set();
    for (const auto& pr : set.prims) {
      MotionPrimitive q = pr;
      for (int i = 0; i < 4; ++i) q = rotate_primitive(q, 1, set.headings);
      CHECK(q.start == pr.start);
      CHECK(q.end == pr.end);
      CHECK(q.sweeps == pr.sweeps);
      for (std::size_t k = 0; k < pr.trajectory.size(); ++k) {
        CHECK(q.trajectory.samples[k].x.x == pr.trajectory.samples[k].x.x);
        CHECK(q.trajectory.samples[k].x.y == pr.trajectory.samples[k].x.y);
      }
    }
  }

  TEST_CASE("generation does not depend on the worker count") {
    ModelParams p;
    const PrimitiveSet a = generate_primitives(p, LatticeSpec::desk_default(), 1);
    const PrimitiveSet b = generate_primitives(p, LatticeSpec::desk_default(), 3);
    REQUIRE(a.prims.size() == b.prims.size());
    for (std::size_t i = 0; i < a.prims.size(); ++i) {
      CHECK(a.prims[i].cost == b.prims[i].cost);
      CHECK(a.prims[i].sweeps == b.prims[i].sweeps);
      CHECK(a.prims[i].trajectory.samples.back().x == b.prims[i].trajectory.samples.back().x);
    }
  }

  TEST_CASE("primitive cache round trip and staleness") {
    ModelParams p;
    const auto& set = testing::desk_set();
    const auto path = scratch("prims.json").string();
    save_primitives(set, path);
    const PrimitiveSet back = load_primitives(path);
    REQUIRE(back.prims.size() == set.prims.size());
    CHECK(back.spec_hash == set.spec_hash);
    CHECK(back.wait_id == set.wait_id);
    for (std::size_t i = 0; i < set.prims.size(); ++i) {
      CHECK(back.prims[i].name == set.prims[i].name);
      CHECK(back.prims[i].cost == set.prims[i].cost);
      CHECK(back.prims[i].sweeps == set.prims[i].sweeps);
      CHECK(back.prims[i].trajectory.samples.back().x == set.prims[i].trajectory.samples.back().x);
    }
    const PrimitiveSet cached = load_or_generate(p, LatticeSpec::desk_default(), path, 1);
    CHECK(cached.spec_hash == set.spec_hash);

    ModelParams other = p;
    other.v_max = 1.4;
    CHECK(LatticeSpec::desk_default().hash(other) != set.spec_hash);
    CHECK_THROWS_AS(load_primitives(scratch("missing.json").string()), IoError);
  }
}
