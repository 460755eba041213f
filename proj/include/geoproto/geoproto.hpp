#pragma once

#include "geoproto/config.hpp"
#include "geoproto/error.hpp"
#include "geoproto/features_io.hpp"
#include "geoproto/graph.hpp"
#include "geoproto/kv.hpp"
#include "geoproto/landmarks.hpp"
#include "geoproto/model_io.hpp"
#include "geoproto/nystrom.hpp"
#include "geoproto/parallel.hpp"
#include "geoproto/proto.hpp"
#include "geoproto/spectral.hpp"
#include "geoproto/synth.hpp"
#include "geoproto/types.hpp"
