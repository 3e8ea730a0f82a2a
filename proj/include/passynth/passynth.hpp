#pragma once

#include "passynth/errors.hpp"
#include "passynth/io.hpp"
#include "passynth/ledger.hpp"
#include "passynth/linalg.hpp"
#include "passynth/lmi_search.hpp"
#include "passynth/lqr_flow.hpp"
#include "passynth/parallel.hpp"
#include "passynth/passivity.hpp"
#include "passynth/pipeline.hpp"
#include "passynth/plant.hpp"
#include "passynth/polytope.hpp"
#include "passynth/region.hpp"
#include "passynth/svg.hpp"
