#include "pisoc/config.hpp"

#include <doctest.h>

using namespace pisoc;

namespace {

json minimal() {
  return json{{"model", {{"kind", "anharmonic"}, {"beta", 5.0}, {"lambda", 1.0}}},
              {"estimator", {{"x0", {0.5}}, {"xT", {0.5}}}}};
}

std::string field_of(const json& doc) {
  try {
    RunConfig::from_json(doc);
  } catch (const Error& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal configuration and defaults") {
  const RunConfig c = RunConfig::from_json(minimal());
  CHECK(c.model.kind == "anharmonic");
  CHECK(c.eps_t() == doctest::Approx(0.05 * 0.05));
  CHECK(c.grid.K_eval == 256);
  CHECK(c.model.build().beta() == 5.0);
  // Round trip.
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("errors name the offending field") {
  json doc = minimal();
  doc["model"].erase("beta");
  CHECK(field_of(doc) == "model.beta");

  doc = minimal();
  doc["grid"] = {{"K_evall", 10}};
  CHECK(field_of(doc) == "grid.K_evall");

  doc = minimal();
  doc["model"]["kind"] = "helium";
  try {
    RunConfig::from_json(doc).model.build();
    FAIL("unknown model kind accepted");
  } catch (const Error& e) {
    CHECK(e.field() == "model.kind");
  }

  doc = minimal();
  doc["bogus"] = 1;
  CHECK(field_of(doc) == "bogus");
}

TEST_CASE("free particle kind") {
  json doc = minimal();
  doc["model"] = {{"kind", "free"}, {"beta", 1.0}, {"N", 2}};
  const ModelSystem s = RunConfig::from_json(doc).model.build();
  CHECK(s.dim() == 2);
  CHECK(std::holds_alternative<FreeParticle>(s.potential()));
}

TEST_CASE("vector fields are checked against the dimension") {
  CHECK(to_vector({1.0, 2.0}, 2, "x0").size() == 2);
  CHECK_THROWS_AS(to_vector({1.0}, 2, "estimator.x0"), Error);
}
