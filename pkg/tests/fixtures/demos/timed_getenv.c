/* getenv("A") immediately, then getenv("B") in a loop after 1.5 s. */
#include <stdio.h>
#include <stdlib.h>
#include <time.h>

static void sleep_ms(long ms) {
    struct timespec ts = {ms / 1000, (ms % 1000) * 1000000L};
    nanosleep(&ts, NULL);
}

int main(void) {
    getenv("A");
    sleep_ms(1500);
    for (int i = 0; i < 3; i++) {
        getenv("B");
        sleep_ms(20);
    }
    printf("done\n");
    return 0;
}
