#include <stdio.h>
#include <stdlib.h>

int main(void) {
    int hits = 0;
    for (int i = 0; i < 10000; i++) {
        if (getenv("PATH") != NULL)
            hits++;
    }
    printf("hits=%d\n", hits);
    return 0;
}
