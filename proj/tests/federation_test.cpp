#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedifl/federation.hpp"
#include "fedifl/report.hpp"

using namespace fedifl;

TEST_CASE("phase machine enforces monotone order") {
  PhaseMachine pm;
  CHECK(pm.phase() == ClientPhase::idle);
  pm.advance(ClientPhase::ipcl);
  pm.advance(ClientPhase::ipfg);
  CHECK_THROWS_AS(pm.advance(ClientPhase::done), std::logic_error);
  CHECK_THROWS_AS(pm.advance(ClientPhase::ipfg), std::logic_error);
  pm.advance(ClientPhase::uploaded);
  pm.advance(ClientPhase::cct);
  pm.advance(ClientPhase::model_uploaded);
  pm.advance(ClientPhase::done);
  CHECK(pm.phase() == ClientPhase::done);
}
