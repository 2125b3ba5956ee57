#pragma once

#include "lanemap/error.hpp"
#include "lanemap/geometry.hpp"
#include "lanemap/polygon.hpp"
#include "lanemap/frame.hpp"
#include "lanemap/marking.hpp"
#include "lanemap/rng.hpp"
#include "lanemap/road.hpp"
#include "lanemap/scene.hpp"
#include "lanemap/preprocess.hpp"
#include "lanemap/extraction.hpp"
#include "lanemap/accumulate.hpp"
#include "lanemap/clustering.hpp"
#include "lanemap/recognition.hpp"
#include "lanemap/lane_model.hpp"
#include "lanemap/evaluation.hpp"
#include "lanemap/parallel.hpp"
#include "lanemap/pipeline.hpp"
#include "lanemap/config.hpp"
#include "lanemap/io.hpp"
