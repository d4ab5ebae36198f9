#pragma once

#include "shira/adapter.hpp"
#include "shira/bench.hpp"
#include "shira/error.hpp"
#include "shira/lemmas.hpp"
#include "shira/linalg.hpp"
#include "shira/mask.hpp"
#include "shira/matrix.hpp"
#include "shira/model.hpp"
#include "shira/ortho.hpp"
#include "shira/random.hpp"
#include "shira/rank.hpp"
#include "shira/store.hpp"
#include "shira/trainer.hpp"
