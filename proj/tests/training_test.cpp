#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fedifl/training.hpp"

using namespace fedifl;

TEST_CASE("hyper defaults match the full-scale schedule") {
  TrainHyper h;
  CHECK(h.ipcl_epochs == 100);
  CHECK(h.ipfg_epochs == 150);
  CHECK(h.cct_epochs == 250);
  CHECK(h.lr1 == doctest::Approx(0.008f));
  CHECK(h.lr2 == doctest::Approx(0.02f));
  CHECK(h.lr3 == doctest::Approx(0.01f));
  CHECK(h.batch_size == 256);
}
