#pragma once

#include "wice/checkpoint.hpp"
#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/featurize.hpp"
#include "wice/gnn.hpp"
#include "wice/graph_io.hpp"
#include "wice/html.hpp"
#include "wice/optimizer.hpp"
#include "wice/pipeline.hpp"
#include "wice/rng.hpp"
#include "wice/synth.hpp"
#include "wice/tag_groups.hpp"
#include "wice/text.hpp"
#include "wice/training.hpp"
#include "wice/wice_eval.hpp"
