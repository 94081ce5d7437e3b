#include <stdio.h>
#include <stdlib.h>
#include "mvr.h"

/* argv[1]: index directory. Searches with document-free random unit vectors
   and prints "ok <hits>" on success. */
int main(int argc, char **argv) {
    if (argc != 2) return 2;
    MvrIndex *idx = NULL;
    if (mvr_index_open(argv[1], &idx) != MVR_STATUS_OK) {
        fprintf(stderr, "open: %s\n", mvr_last_error());
        return 1;
    }
    size_t dim = mvr_index_dim(idx);
    float *q = calloc(4 * dim, sizeof(float));
    for (size_t t = 0; t < 4; t++) q[t * dim + t] = 1.0f;
    MvrSearchParams p = mvr_search_params_default();
    uint32_t docs[10];
    float scores[10];
    size_t n = 0;
    if (mvr_index_search(idx, q, 4, &p, docs, scores, 10, &n) != MVR_STATUS_OK) {
        fprintf(stderr, "search: %s\n", mvr_last_error());
        return 1;
    }
    char id[64];
    size_t len = 0;
    if (n > 0 && mvr_index_doc_id(idx, docs[0], id, sizeof id, &len) != MVR_STATUS_OK) return 1;
    printf("ok %zu %s\n", n, n > 0 ? id : "-");
    free(q);
    mvr_index_free(idx);
    return 0;
}
