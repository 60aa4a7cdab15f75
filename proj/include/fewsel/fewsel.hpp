#pragma once

#include "fewsel/backend.hpp"
#include "fewsel/config.hpp"
#include "fewsel/criteria.hpp"
#include "fewsel/error.hpp"
#include "fewsel/evaluation.hpp"
#include "fewsel/folds.hpp"
#include "fewsel/grid.hpp"
#include "fewsel/hash.hpp"
#include "fewsel/http_backend.hpp"
#include "fewsel/permutations.hpp"
#include "fewsel/render.hpp"
#include "fewsel/replay.hpp"
#include "fewsel/rng.hpp"
#include "fewsel/runner.hpp"
#include "fewsel/score_table.hpp"
#include "fewsel/selection.hpp"
#include "fewsel/study.hpp"
#include "fewsel/synthetic.hpp"
#include "fewsel/task.hpp"
